"""Fourier pricing of European calls under BSM, Bates and asymmetric Variance Gamma dynamics."""
from .errors import (
    AgreementFailure,
    AlphaInfeasible,
    BadLength,
    InvalidParams,
    NoConvergence,
    NonFiniteIntegrand,
    NonFiniteResult,
    PricingError,
)
from .models import (
    AvgMeasureReport,
    AvgParams,
    BatesParams,
    BsmParams,
    MarketParams,
    check_avg_measure,
    count_cf_evaluations,
    cumulants,
    evaluate_cf,
    load_model_file,
    mean_log_price,
    model_from_dict,
    model_to_dict,
)
from .pricers import (
    CarrMadanConfig,
    CosGrid,
    FftConfig,
    PriceVector,
    PricingRequest,
    call_from_parity,
    fft_sa_partition,
    no_arbitrage_bounds,
    price_attari,
    price_carr_madan,
    price_cos,
    price_dpd,
    price_dpd_vec,
    price_fft,
    price_fft_sa,
    put_from_parity,
)
from .reference import ReferenceCache, ReferenceQuote, bsm_closed_form, dual_method_reference, dual_method_references
from .transforms import FourierGrid, fft, trapezoid

__version__ = "0.1.0"
