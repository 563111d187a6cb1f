"""Pricing and calibration toolkit for European options under three
stochastic volatility models: a square-root-variance base model, its
jump-diffusion extension with log-uniform jump amplitudes, and a
first-order multiscale correction."""

from .calibration import (CalibrationResult, MreBucket, MreReport, ParamVector,
                          StagedCalibration, calibrate, kappa_to_zeta, mre,
                          mre_report, objective, residuals, staged_calibrate,
                          zeta_to_kappa)
from .errors import (CalibrationError, ChainSchemaError, EmptyChainError,
                     NoSolutionError, NumericalDomainError, QuadratureError)
from .implied_vol import SmilePoint, bs_price, bs_vega, implied_vol, smile_curve
from .market_data import (OptionChain, OptionQuote, filter_chain, load_chain,
                          quote_contract, save_chain, synth_chain)
from .mc import McConfig, McEstimate, riccati_numeric, simulate_strike_grid, simulate_svj
from .msv import (MsvParams, NestedQuadConfig, a3, b_coef, correction_c1,
                  msv_cf, price_msv, qhat0, qhat1)
from .pricing import (CALL, PUT, CFTerms, HestonParams, OptionContract,
                      QuadratureConfig, SvjParams, cf_terms, mean_jump,
                      price_heston, price_svj, prob_pj, svj_cf)

__version__ = "0.1.0"
