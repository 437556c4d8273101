"""Power-enhanced high-dimensional tests for factor-pricing alphas and cross-sectional independence."""
from .csi import CsiConfig, bfk_j1, pair_correlations, power_enhanced_csi, within_ols
from .errors import ConfigError, EstimationError, NotPositiveDefiniteError, PanelError, PowerEnhanceError
from .factor_ols import FactorFit, alpha_tstats, fit_factor_model
from .kernels import BACKEND
from .panel import FactorPanel, Panel, align, load_factor_csv, load_panel_csv, write_panel_csv
from .quad_tests import FpConfig, TestReport, feasible_wald, generic_jq, normal_p, power_enhanced_fp
from .screening import ScreeningResult, high_criticism_delta, oracle_sets, screen
from .sparse_cov import choose_C, choose_C_cv, sample_residual_cov, sparsity_diag, threshold_cov

__version__ = "0.1.0"
