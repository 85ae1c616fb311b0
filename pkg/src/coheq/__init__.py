"""coheq: coherent optical link simulation and a numpy neural equalizer.

Subpackages and modules
-----------------------
txsig      QAM constellations, symbol generation, RRC pulse shaping.
fiberlink  split-step Manakov propagation, EDFA noise, waveform files.
rxdsp      receiver chain: dispersion compensation, matched filtering,
           alignment, transceiver noise, symbol frames.
dataset    symbol windowing, epoch shuffling, subset selection.
metrics    BER, Q factor, SNR estimation, training metric traces.
neuralnet  conv + biLSTM + dense equalizer with exact gradients, Adam,
           transfer-learning freeze strategies, binary checkpoints.
harness    experiment orchestration: scenarios, reference curves,
           savings measurement, command line interface.
"""

from . import dataset, fiberlink, metrics, neuralnet, rxdsp, txsig

__version__ = "1.0.0"

__all__ = [
    "dataset",
    "fiberlink",
    "metrics",
    "neuralnet",
    "rxdsp",
    "txsig",
    "__version__",
]
