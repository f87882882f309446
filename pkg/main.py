"""
LPFP Golden Model - Main Entry Point
====================================

Uso:
    python main.py fmt-table M4E3
    python main.py verify-pack --format M4E3 --exhaustive
    python main.py quantize --model fixtures/tiny_cnn.manifest --weights w.bin --calib calib.bin --out scheme.txt
    python main.py eval --model fixtures/tiny_cnn.manifest --weights w.bin --scheme scheme.txt --dataset data.npz
    python main.py sweep --vgg16 --packing kernel --out sweep.csv
"""

import sys
from pathlib import Path

from dotenv import load_dotenv

# Añadir el directorio raíz al path
sys.path.insert(0, str(Path(__file__).parent))

from cli import run


def main() -> None:
    load_dotenv()
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
