"""Pruebas de la evaluación de precisión y de la exploración de anchos."""

import numpy as np
import pytest

from errors import EmptyDatasetError, ShapeError
from inference import (
    AccuracyReport,
    AccuracyRow,
    capture_calibration,
    evaluate,
    evaluate_many,
    explore_bitwidths,
    load_dataset,
    load_network,
    read_inputs,
    select_format_by_accuracy,
    topk_hits,
)
from lpfp import LpfpFormat
from quantizer import search_format


def row(label, top1, top5=100.0):
    return AccuracyRow(label=label, topk={1: top1, 5: top5}, per_class={0: top1}, samples=10)


class TestTopk:
    def test_hits(self):
        logits = np.array([[0.1, 0.9, 0.5], [0.8, 0.1, 0.3], [0.2, 0.2, 0.6]])
        labels = np.array([1, 2, 0])
        assert list(topk_hits(logits, labels, 1)) == [True, False, False]
        assert list(topk_hits(logits, labels, 2)) == [True, True, True]

    def test_ties_prefer_lower_index(self):
        logits = np.array([[0.5, 0.5, 0.1]])
        assert topk_hits(logits, np.array([0]), 1)[0]
        assert not topk_hits(logits, np.array([1]), 1)[0]

    def test_k_larger_than_classes(self):
        assert topk_hits(np.array([[0.1, 0.2]]), np.array([0]), 5)[0]


class TestAccuracyReport:
    def test_csv_and_gap(self):
        report = AccuracyReport([row("fp32", 90.0), row("M4E3", 89.5), row("M7E0", 80.0)])
        assert report.gap("M4E3") == pytest.approx(0.5)
        lines = report.to_csv().splitlines()
        assert lines[0] == "model,top1,top5,gap_top1,samples"
        assert lines[1] == "fp32,90.00,100.00,0.00,10"
        assert lines[3] == "M7E0,80.00,100.00,10.00,10"

    def test_select_by_accuracy(self):
        report = AccuracyReport([row("fp32", 90.0), row("M5E2", 88.0), row("M4E3", 89.0)])
        assert select_format_by_accuracy(report) == "M4E3"

    def test_select_breaks_ties_by_score(self):
        report = AccuracyReport([row("fp32", 90.0), row("M5E2", 89.0), row("M4E3", 89.0)])
        assert select_format_by_accuracy(report) == "M5E2"
        assert select_format_by_accuracy(report, {"M5E2": 0.2, "M4E3": 0.1}) == "M4E3"

    def test_select_needs_quantized_rows(self):
        with pytest.raises(EmptyDatasetError):
            select_format_by_accuracy(AccuracyReport([row("fp32", 90.0)]))


class TestTinyCnnAccuracy:
    @pytest.fixture(scope="class")
    def setup(self, tiny_cnn):
        network = load_network(tiny_cnn.manifest, tiny_cnn.weights)
        calibration = capture_calibration(network, read_inputs(tiny_cnn.calib, network.input_shape))
        dataset = load_dataset(tiny_cnn.dataset, network.input_shape)
        return network, calibration, dataset

    def test_empty_dataset(self, setup):
        network, calibration, _ = setup
        scheme, _ = search_format(network, calibration, [LpfpFormat(4, 3)])
        with pytest.raises(EmptyDatasetError):
            evaluate(network, scheme, (np.zeros((0, 1, 12, 12)), np.zeros(0, dtype=np.int64)))

    def test_dataset_shape(self, setup):
        network, calibration, _ = setup
        scheme, _ = search_format(network, calibration, [LpfpFormat(4, 3)])
        with pytest.raises(ShapeError):
            evaluate(network, scheme, (np.zeros((2, 1, 8, 8)), np.zeros(2, dtype=np.int64)))

    def test_reference_is_not_perfect(self, setup):
        network, calibration, dataset = setup
        scheme, _ = search_format(network, calibration, [LpfpFormat(4, 3)])
        report = evaluate(network, scheme, dataset, topk=(1,))
        # seis clases: el azar da ~16.7 %
        assert 40.0 < report.reference.top1 < 100.0

    @pytest.mark.slow
    def test_formats_close_to_reference(self, setup):
        network, calibration, dataset = setup
        schemes = []
        for name in ("M4E3", "M5E2", "M7E0"):
            scheme, _ = search_format(network, calibration, [LpfpFormat.parse(name)])
            schemes.append((name, scheme))
        report = evaluate_many(network, schemes, dataset, topk=(1, 2), threads=2)

        assert [r.label for r in report.rows] == ["fp32", "M4E3", "M5E2", "M7E0"]
        assert report.reference.samples == dataset[1].size
        for name in ("M4E3", "M5E2"):
            assert abs(report.gap(name)) <= 5.0

    @pytest.mark.slow
    def test_accuracy_drops_with_bit_width(self, setup):
        network, calibration, dataset = setup
        report, _ = explore_bitwidths(network, calibration, dataset, widths=(8, 4, 3), topk=(1,))
        top1 = {r.label.split(":")[0]: r.top1 for r in report.rows}
        assert list(top1) == ["fp32", "8b", "4b", "3b"]
        assert abs(top1["fp32"] - top1["8b"]) <= 5.0
        assert top1["fp32"] >= top1["4b"] >= top1["3b"]
        assert top1["3b"] <= top1["8b"] - 10.0

    @pytest.mark.slow
    def test_explore_bitwidths(self, setup):
        network, calibration, dataset = setup
        report, quant_reports = explore_bitwidths(network, calibration, dataset, widths=(8, 5), topk=(1,))
        labels = [r.label for r in report.rows]
        assert labels[0] == "fp32"
        assert labels[1].startswith("8b:M") and labels[2].startswith("5b:M")
        assert sorted(quant_reports) == [5, 8]
        assert len(quant_reports[5].summary) == 4
        assert labels[1] == f"8b:{quant_reports[8].selected.name}"
