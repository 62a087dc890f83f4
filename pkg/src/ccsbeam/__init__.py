"""Learned 2D convolutional compressed sensing for mmWave beam alignment."""

__version__ = "0.1.0"

from ccsbeam.numkit import (
    BeamIndex,
    beam_pattern,
    circ_shift,
    dft2,
    dft2_direct,
    dft_matrix,
    frob_inner,
    idft2,
)
from ccsbeam.channelgen import (
    Channel,
    Dataset,
    ScenarioConfig,
    beamspace_prior,
    generate_dataset,
    load_dataset,
    sample_channel,
    save_dataset,
    steering_matrix,
)
from ccsbeam.ccs import (
    BaseMatrix,
    SubsamplingSet,
    add_awgn,
    circ_xcorr_direct,
    circ_xcorr_fft,
    conv_measure,
    measure_hardware,
    quantize_base,
    random_base,
    restructure_channel,
    sample_omega,
    subsample,
)
from ccsbeam.net import (
    NetworkParams,
    TrainConfig,
    forward,
    gradients,
    init_params,
    loss,
    predict_beam,
    quantize_and_retrain,
    train,
)
from ccsbeam.evaluation import (
    EvalReport,
    baseline_random_ccs,
    baseline_random_unstructured,
    evaluate,
    exhaustive_best_beam,
    export_report,
    rate,
)
