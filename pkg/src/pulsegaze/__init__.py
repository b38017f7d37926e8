"""Heart rate (ICA and chrominance rPPG) and eye-blink duration from image features."""

from .blink import (
    BlinkTimeline,
    EigenBasis,
    EyeImage,
    FrameLabel,
    LdaModel,
    MlpModel,
    accuracy,
    blink_events,
    classify_lda,
    classify_mlp,
    fit_lda,
    fit_mlp,
    fit_pca,
    postprocess_labels,
    preprocess_eye,
    train_lda,
)
from .chrom import BvpSignal, ChromPair, chrom_alpha, chrom_bvp, chrominance_xy
from .errors import PulseGazeError
from .filters import (
    BandpassFilter,
    Spectrum,
    apply_filter,
    design_bandpass,
    dominant_frequency,
    spectrum,
)
from .hr import HrEstimate, HrSeries, error_summary, estimate_hr, windowed_hr
from .ica import SourceSet, UnmixingMatrix, fastica_fit, ica_bvp, select_pulse_component
from .trace import (
    ChannelTrace,
    Frame,
    NormalizedTrace,
    RoiSpec,
    build_trace,
    normalize_channel,
    normalize_trace,
    roi_mean,
)

__version__ = "0.1.0"
