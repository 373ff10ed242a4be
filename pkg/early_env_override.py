# -*- coding: utf-8 -*-
"""
Раннее принудительное окружение.
ДОЛЖЕН импортироваться ПЕРВЫМ в entrypoint (run_almab.py), до numpy/scipy.
"""
import os

# BLAS в один поток: результаты линейной алгебры не зависят от числа воркеров
for _key in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_key, "1")

# Базовые дефолты (можете переопределить в .env)
os.environ.setdefault("ALMAB_OUT_DIR", "out")
os.environ.setdefault("LOG_LEVEL", "INFO")
