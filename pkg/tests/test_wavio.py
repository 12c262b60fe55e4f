import numpy as np
import pytest
from scipy.io import wavfile

from cmnet.signal import WavFormatError, read_wav, write_wav


def test_round_trip_int16(tmp_path, rng):
    x = 0.5 * rng.uniform(-1, 1, 1600)
    write_wav(tmp_path / "a.wav", x)
    y = read_wav(tmp_path / "a.wav")
    assert np.max(np.abs(y - x)) < 1.0 / 32767


def test_clipping(tmp_path):
    write_wav(tmp_path / "c.wav", np.array([2.0, -2.0, 0.0]))
    rate, data = wavfile.read(tmp_path / "c.wav")
    assert data.dtype == np.int16 and list(data) == [32767, -32767, 0]


def test_float32_accepted(tmp_path):
    wavfile.write(tmp_path / "f.wav", 16000, np.array([0.25, -0.5], dtype=np.float32))
    np.testing.assert_allclose(read_wav(tmp_path / "f.wav"), [0.25, -0.5])


@pytest.mark.parametrize("rate,data", [(44100, np.zeros(10, np.int16)), (16000, np.zeros((10, 2), np.int16)),
                                       (16000, np.zeros(10, np.int32))])
def test_rejects_bad_formats(tmp_path, rate, data):
    wavfile.write(tmp_path / "b.wav", rate, data)
    with pytest.raises(WavFormatError):
        read_wav(tmp_path / "b.wav")


def test_rejects_non_wav(tmp_path):
    (tmp_path / "t.wav").write_text("hello")
    with pytest.raises(WavFormatError):
        read_wav(tmp_path / "t.wav")
