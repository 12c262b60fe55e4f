"""Classical DSP: STFT, GCC-PHAT alignment, complex ratio masks and metrics."""
from .align import Alignment, gcc_phat_align
from .crm import CRMask, crm_apply, crm_compute
from .metrics import active_power, erle, level_ratio_db, scale_to_ratio, si_snr
from .stft import SAMPLE_RATE, ComplexSpectrogram, StftConfig, istft, stft
from .wavio import WavFormatError, read_wav, write_wav

__all__ = [
    "Alignment", "CRMask", "ComplexSpectrogram", "SAMPLE_RATE", "StftConfig", "WavFormatError",
    "active_power", "crm_apply", "crm_compute", "erle", "gcc_phat_align", "istft", "level_ratio_db",
    "read_wav", "scale_to_ratio", "si_snr", "stft", "write_wav",
]
