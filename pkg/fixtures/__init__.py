# Fixtures - redes y datos de prueba
