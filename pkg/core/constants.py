"""Constantes partilhadas: hiperparâmetros por omissão, limites e formatos."""

import math

# ---------------------------------------------------------------------------
# Numérica
# ---------------------------------------------------------------------------
LAYER_NORM_EPS = 1e-5
GRADCHECK_H = 1e-5
GRADCHECK_EPS = 1e-8
GRADCHECK_TOL = 1e-4
# Entradas com gradiente ~0 são dominadas por arredondamento na diferença
# central; abaixo deste erro absoluto a entrada passa.
GRADCHECK_ATOL = 1e-7
COSINE_EPS = 1e-12

# ---------------------------------------------------------------------------
# Modelo
# ---------------------------------------------------------------------------
DEFAULT_THETA = 0.2
DEFAULT_BLOCKS = 2
DEFAULT_LEVELS = 4
FFN_MULT = 4
CONV_KERNEL = 3
# Bias inicial da cabeça de classificação: prior de 1% de frames positivos.
CLS_PRIOR_PROB = 0.01
CLS_PRIOR_BIAS = -math.log((1.0 - CLS_PRIOR_PROB) / CLS_PRIOR_PROB)
# Limites (em frames) do primeiro nível; cada nível seguinte duplica.
LEVEL_BASE_DURATION = 8

# ---------------------------------------------------------------------------
# Sensibilidade
# ---------------------------------------------------------------------------
SIGMA_MIN = 0.1
SIGMA_MAX = 5.0
MU_CLS_INIT = 0.0
MU_SOT_INIT = -0.5
MU_EOT_INIT = 0.5
SIGMA_INIT = 1.0
CURVE_SAMPLES = 101

# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------
FOCAL_GAMMA = 2.0
FOCAL_ALPHA = 0.25
ASCL_TEMPERATURE = 0.07
DEFAULT_LAMBDA = 0.3
DEFAULT_DELTA = 0.2

# ---------------------------------------------------------------------------
# Treino
# ---------------------------------------------------------------------------
DEFAULT_LEARNING_RATE = 1e-3
DEFAULT_CLIP_NORM = 1.0
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8

# ---------------------------------------------------------------------------
# Inferência e avaliação
# ---------------------------------------------------------------------------
SCORE_THRESHOLD = 0.001
PRE_NMS_TOPK = 2000
NMS_SIGMA = 0.5
NMS_KEEP = 200
NMS_MIN_SCORE = 0.001
EVAL_THRESHOLDS = tuple(round(0.1 * k, 1) for k in range(1, 10))
EVAL_MAX_PER_VIDEO = 200

# ---------------------------------------------------------------------------
# Ficheiros
# ---------------------------------------------------------------------------
FEATURE_MAGIC = b"ASLF"
FEATURE_VERSION = 1
FEATURE_SUFFIX = ".aslf"
DATASET_MANIFEST = "dataset.json"
FEATURES_DIR = "features"
ANNOTATIONS_DIR = "annotations"
