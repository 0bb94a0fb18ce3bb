"""mmWave FMCW radar chain: raw ADC frames to detections, point clouds and images.

Frame data flows as
    raw int16 -> (chirp, antenna, sample) -> range FFT -> (range, chirp, antenna)
    -> Doppler FFT -> velocity compensation -> angle FFT -> (range, doppler, angle)
    -> OS-CFAR on the range-Doppler power map -> points -> BEV / polar images.
The virtual array is treated as a uniform half-wavelength line (azimuth only).
"""
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import fft
from scipy.optimize import brentq
from scipy.signal import windows

from ..exceptions import FormatError, MissingFileError, ParameterError, UnsupportedVersionError
from .grid import min_max_normalize

logger = logging.getLogger(__name__)

RAW_MAGIC = b'R3DA'
RAW_VERSION = 1
RAW_HEADER = '<HIIIIB'

# raw sample orderings, outermost axis first; I and Q are always the innermost pair
LAYOUT_CHIRP_TX_RX_SAMPLE = 0
LAYOUT_TX_CHIRP_SAMPLE_RX = 1
_LAYOUT_AXES = {
    LAYOUT_CHIRP_TX_RX_SAMPLE: ('chirp', 'tx', 'rx', 'sample'),
    LAYOUT_TX_CHIRP_SAMPLE_RX: ('tx', 'chirp', 'sample', 'rx'),
}
_CANONICAL = ('chirp', 'tx', 'rx', 'sample')


@dataclass(frozen=True)
class RadarFrameConfig:
    samples_per_chirp: int = 128
    chirps_per_frame: int = 64
    tx_count: int = 2
    rx_count: int = 4
    range_lo: int = 4
    range_hi: int = 120
    range_resolution: float = 0.125
    max_velocity: float = 2.5
    angle_bins: int = 64
    layout: int = LAYOUT_CHIRP_TX_RX_SAMPLE

    def validate(self):
        for name in ('samples_per_chirp', 'chirps_per_frame', 'tx_count', 'rx_count'):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not (0 <= self.range_lo < self.range_hi <= self.samples_per_chirp):
            raise ParameterError(
                f"range crop [{self.range_lo}, {self.range_hi}) invalid for {self.samples_per_chirp} samples")
        if self.angle_bins < self.virtual_antennas:
            raise ParameterError(
                f"angle_bins {self.angle_bins} smaller than virtual array {self.virtual_antennas}")
        if self.layout not in _LAYOUT_AXES:
            raise ParameterError(f"unknown ADC layout {self.layout}")
        return self

    @property
    def virtual_antennas(self):
        return self.tx_count * self.rx_count

    @property
    def raw_length(self):
        return 2 * self.samples_per_chirp * self.chirps_per_frame * self.virtual_antennas

    def axis_sizes(self):
        return {'chirp': self.chirps_per_frame, 'tx': self.tx_count,
                'rx': self.rx_count, 'sample': self.samples_per_chirp}


@dataclass(frozen=True)
class Detection:
    range_bin: int
    doppler_bin: int
    angle_bin: int
    snr: float


@dataclass(frozen=True)
class GridSpec:
    x_min: float = -6.0
    x_max: float = 6.0
    y_min: float = 0.0
    y_max: float = 12.0
    resolution: float = 0.1875

    @property
    def shape(self):
        return (int(round((self.y_max - self.y_min) / self.resolution)),
                int(round((self.x_max - self.x_min) / self.resolution)))

    @classmethod
    def square(cls, extent, resolution):
        return cls(-extent / 2, extent / 2, 0.0, extent, resolution)


@dataclass
class BevRaster:
    image: np.ndarray
    dropped: int


@dataclass
class FrameResult:
    detections: list
    points: np.ndarray
    bev: BevRaster
    polar: np.ndarray


# ---------------------------
# ADC reshaping
# ---------------------------
def reshape_adc(raw, cfg):
    """Interleaved int16 I/Q -> complex (chirp, virtual antenna, sample)."""
    raw = np.asarray(raw)
    if raw.size != cfg.raw_length:
        raise FormatError(f"ADC frame has {raw.size} values, expected {cfg.raw_length}")
    sizes = cfg.axis_sizes()
    axes = _LAYOUT_AXES[cfg.layout]
    iq = raw.astype(np.float64).reshape([sizes[a] for a in axes] + [2])
    data = iq[..., 0] + 1j * iq[..., 1]
    data = np.transpose(data, [axes.index(a) for a in _CANONICAL])
    return data.reshape(cfg.chirps_per_frame, cfg.virtual_antennas, cfg.samples_per_chirp)


def serialize_adc(samples, cfg):
    """Inverse of ``reshape_adc``; values are rounded and clipped to int16."""
    sizes = cfg.axis_sizes()
    data = np.asarray(samples).reshape([sizes[a] for a in _CANONICAL])
    data = np.transpose(data, [_CANONICAL.index(a) for a in _LAYOUT_AXES[cfg.layout]])
    iq = np.stack([data.real, data.imag], axis=-1)
    return np.clip(np.rint(iq), -32768, 32767).astype('<i2').ravel()


def save_raw(path, raw, cfg):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = RAW_MAGIC + struct.pack(RAW_HEADER, RAW_VERSION, cfg.samples_per_chirp,
                                     cfg.chirps_per_frame, cfg.tx_count, cfg.rx_count, cfg.layout)
    with open(path, 'wb') as fh:
        fh.write(header)
        fh.write(np.asarray(raw, dtype='<i2').tobytes())
    return path


def load_raw(path, cfg):
    """Read an "R3DA" frame; the header dims and layout override those of ``cfg``.

    Returns (raw int16 array, RadarFrameConfig matching the file).
    """
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"raw frame not found: {path}")
    blob = path.read_bytes()
    if blob[:4] != RAW_MAGIC:
        raise FormatError("bad raw frame magic", offset=0)
    header_size = struct.calcsize(RAW_HEADER)
    if len(blob) < 4 + header_size:
        raise FormatError("raw frame header truncated", offset=len(blob))
    version, n_s, n_c, tx, rx, layout = struct.unpack_from(RAW_HEADER, blob, 4)
    if version != RAW_VERSION:
        raise UnsupportedVersionError(f"raw frame version {version} is not supported", offset=4)
    cfg = RadarFrameConfig(n_s, n_c, tx, rx, min(cfg.range_lo, n_s - 1), min(cfg.range_hi, n_s),
                           cfg.range_resolution, cfg.max_velocity,
                           max(cfg.angle_bins, tx * rx), layout).validate()
    payload = blob[4 + header_size:]
    if len(payload) != 2 * cfg.raw_length:
        raise FormatError(f"expected {2 * cfg.raw_length} payload bytes, found {len(payload)}",
                          offset=4 + header_size + len(payload))
    return np.frombuffer(payload, dtype='<i2'), cfg


# ---------------------------
# FFT stages
# ---------------------------
def blackman_window(n):
    """Classic Blackman: 0.42 - 0.5 cos(2 pi k/(n-1)) + 0.08 cos(4 pi k/(n-1))."""
    if n < 2:
        raise ParameterError(f"window length must be >= 2, got {n}")
    return windows.blackman(n, sym=True)


def range_fft(samples, cfg, window=True):
    """Windowed FFT over fast time, cropped to [range_lo, range_hi) -> (range, chirp, antenna)."""
    expected = (cfg.chirps_per_frame, cfg.virtual_antennas, cfg.samples_per_chirp)
    if np.shape(samples) != expected:
        raise FormatError(f"sample tensor shape {np.shape(samples)} != {expected}")
    data = np.asarray(samples, dtype=np.complex128)
    if window:
        data = data * blackman_window(cfg.samples_per_chirp)
    spectrum = fft.fft(data, axis=-1)[..., cfg.range_lo:cfg.range_hi]
    return np.transpose(spectrum, (2, 0, 1))


def doppler_fft(cube, cfg):
    """FFT over slow time, zero Doppler shifted to bin chirps_per_frame // 2."""
    if np.shape(cube)[1] != cfg.chirps_per_frame:
        raise FormatError(f"cube has {np.shape(cube)[1]} chirps, expected {cfg.chirps_per_frame}")
    return fft.fftshift(fft.fft(cube, axis=1), axes=1)


def signed_doppler_bins(cfg):
    return np.arange(cfg.chirps_per_frame) - cfg.chirps_per_frame // 2


def velocity_compensate(cube, cfg):
    """Undo the TDM-MIMO phase a moving target accrues between transmitter slots.

    Channel of transmitter m at signed Doppler bin b is rotated by
    exp(-j 2 pi m b / (N_c * tx_count)), i.e. exp(-j pi m b / N_c) for two transmitters.
    """
    m_tx = np.arange(cfg.virtual_antennas) // cfg.rx_count
    b = signed_doppler_bins(cfg)
    phase = np.exp(-2j * np.pi * np.outer(b, m_tx) / (cfg.chirps_per_frame * cfg.tx_count))
    if cfg.tx_count == 1:
        return np.array(cube, copy=True)
    return cube * phase[None, :, :]


def angle_fft(cube, cfg):
    """Zero-padded FFT across the virtual array -> (range, doppler, angle)."""
    if np.shape(cube)[2] != cfg.virtual_antennas:
        raise FormatError(f"cube has {np.shape(cube)[2]} channels, expected {cfg.virtual_antennas}")
    return fft.fftshift(fft.fft(cube, n=cfg.angle_bins, axis=2), axes=2)


def angle_bin_to_azimuth(angle_bin, cfg):
    sin_theta = 2.0 * (np.asarray(angle_bin, dtype=np.float64) - cfg.angle_bins // 2) / cfg.angle_bins
    return np.arcsin(np.clip(sin_theta, -1.0, 1.0))


# ---------------------------
# OS-CFAR
# ---------------------------
def training_ring(guard, train):
    """Boolean window mask: True on training cells, False on guard cells and CUT."""
    half = guard + train
    ring = np.ones((2 * half + 1, 2 * half + 1), dtype=bool)
    ring[train:train + 2 * guard + 1, train:train + 2 * guard + 1] = False
    return ring


def default_order(guard, train):
    n = int(training_ring(guard, train).sum())
    return -(-3 * n // 4)


def cfar_alpha(pfa, n, k):
    """Scale alpha with P_fa = prod_{i<k} (n - i) / (n - i + alpha) for square-law noise."""
    if not (0 < pfa < 1):
        raise ParameterError(f"design false-alarm rate must be in (0, 1), got {pfa}")
    if not (1 <= k <= n):
        raise ParameterError(f"order index k={k} outside 1..{n}")
    terms = n - np.arange(k, dtype=np.float64)

    def excess(alpha):
        return float(np.sum(np.log(terms / (terms + alpha)))) - np.log(pfa)

    upper = 1.0
    while excess(upper) > 0:
        upper *= 2.0
    return brentq(excess, 0.0, upper, xtol=1e-12)


def os_cfar_threshold(power, guard, train, k, chunk_rows=64):
    """k-th smallest training cell around every cell (the noise estimate).

    Windows are truncated at the map border; the order index then scales as
    ceil(k * available / full).
    """
    power = np.asarray(power, dtype=np.float64)
    ring = training_ring(guard, train)
    n_full = int(ring.sum())
    half = guard + train
    padded = np.pad(power, half, constant_values=np.nan)
    stat = np.empty_like(power)
    for r0 in range(0, power.shape[0], chunk_rows):
        r1 = min(r0 + chunk_rows, power.shape[0])
        win = sliding_window_view(padded[r0:r1 + 2 * half], ring.shape)
        cells = np.sort(win[..., ring], axis=-1)
        available = np.sum(~np.isnan(cells), axis=-1)
        order = np.maximum(1, -(-k * available // n_full))
        stat[r0:r1] = np.take_along_axis(cells, (order - 1)[..., None], axis=-1)[..., 0]
    return stat


def os_cfar_threshold_brute(power, guard, train, k):
    """Per-cell loop version of ``os_cfar_threshold``; used as a reference."""
    power = np.asarray(power, dtype=np.float64)
    height, width = power.shape
    ring = training_ring(guard, train)
    n_full = int(ring.sum())
    half = guard + train
    stat = np.empty_like(power)
    for row in range(height):
        for col in range(width):
            cells = []
            for dr in range(-half, half + 1):
                for dc in range(-half, half + 1):
                    r, c = row + dr, col + dc
                    if ring[dr + half, dc + half] and 0 <= r < height and 0 <= c < width:
                        cells.append(power[r, c])
            order = max(1, -(-k * len(cells) // n_full))
            stat[row, col] = sorted(cells)[order - 1] if cells else np.nan
    return stat


def os_cfar(power, guard=2, train=8, k=None, alpha=None, pfa=1e-4):
    """Cells whose power exceeds alpha times their k-th order training statistic.

    Returns a list of (row, col, snr_db) with snr the ratio to that statistic.
    """
    power = np.asarray(power, dtype=np.float64)
    if power.ndim != 2:
        raise ParameterError(f"CFAR input must be 2D, got shape {power.shape}")
    if guard < 0 or train < 1:
        raise ParameterError(f"need guard >= 0 and train >= 1, got {guard}, {train}")
    n_full = int(training_ring(guard, train).sum())
    k = default_order(guard, train) if k is None else int(k)
    if not (1 <= k <= n_full):
        raise ParameterError(f"order index k={k} outside 1..{n_full}")
    if alpha is None:
        alpha = cfar_alpha(pfa, n_full, k)
    stat = os_cfar_threshold(power, guard, train, k)
    rows, cols = np.nonzero(power > alpha * stat)
    noise = np.maximum(stat[rows, cols], np.finfo(np.float64).tiny)
    snr = 10.0 * np.log10(power[rows, cols] / noise)
    return [(int(r), int(c), float(s)) for r, c, s in zip(rows, cols, snr)]


def detect(spectrum, guard=2, train=8, k=None, alpha=None, pfa=1e-4):
    """OS-CFAR on the range-Doppler power map, azimuth from the strongest angle bin."""
    power = np.abs(spectrum) ** 2
    rd_power = power.sum(axis=2)
    hits = os_cfar(rd_power, guard, train, k, alpha, pfa)
    return [Detection(r, d, int(np.argmax(power[r, d])), snr) for r, d, snr in hits]


# ---------------------------
# points and images
# ---------------------------
def polar_to_cartesian(ranges, azimuths):
    """x = r sin(az) (right), y = r cos(az) (forward)."""
    ranges = np.asarray(ranges, dtype=np.float64)
    azimuths = np.asarray(azimuths, dtype=np.float64)
    return ranges * np.sin(azimuths), ranges * np.cos(azimuths)


def detections_to_points(detections, cfg):
    """Detections -> (N, 3) array of x, y (meters) and snr (dB)."""
    if not detections:
        return np.zeros((0, 3))
    range_bins = np.array([d.range_bin for d in detections])
    if range_bins.max() >= cfg.range_hi - cfg.range_lo:
        raise ParameterError("detection range bin outside the cropped cube")
    ranges = (range_bins + cfg.range_lo) * cfg.range_resolution
    azimuths = angle_bin_to_azimuth([d.angle_bin for d in detections], cfg)
    x, y = polar_to_cartesian(ranges, azimuths)
    return np.column_stack([x, y, [d.snr for d in detections]])


def rasterize_bev(points, spec):
    """Max-SNR-per-pixel top-down image, min-max normalized; far range at row 0."""
    height, width = spec.shape
    grid = np.zeros((height, width), dtype=np.float64)
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    rows = np.floor((spec.y_max - points[:, 1]) / spec.resolution).astype(int)
    cols = np.floor((points[:, 0] - spec.x_min) / spec.resolution).astype(int)
    inside = (rows >= 0) & (rows < height) & (cols >= 0) & (cols < width)
    np.maximum.at(grid, (rows[inside], cols[inside]), np.maximum(points[inside, 2], 0.0))
    dropped = int(np.count_nonzero(~inside))
    if dropped:
        logger.debug(f"{dropped} points outside the BEV extent")
    return BevRaster(min_max_normalize(grid), dropped)


def rasterize_polar(spectrum):
    """Range-azimuth image: Doppler-integrated power in dB, min-max normalized."""
    power = (np.abs(spectrum) ** 2).sum(axis=1)
    floor = np.finfo(np.float64).tiny
    return min_max_normalize(10.0 * np.log10(power + floor))


# ---------------------------
# full chain and simulation
# ---------------------------
def process_frame(raw, cfg, spec=None, guard=2, train=8, pfa=1e-4):
    cfg.validate()
    spec = spec or GridSpec()
    samples = reshape_adc(raw, cfg)
    cube = doppler_fft(range_fft(samples, cfg), cfg)
    spectrum = angle_fft(velocity_compensate(cube, cfg), cfg)
    detections = detect(spectrum, guard, train, pfa=pfa)
    points = detections_to_points(detections, cfg)
    logger.info(f"Frame processed: {len(detections)} detections")
    return FrameResult(detections, points, rasterize_bev(points, spec), rasterize_polar(spectrum))


def simulate_frame(targets, cfg, rng, noise_std=1.0, gain=64.0):
    """TDM-MIMO FMCW ADC frame for point targets (range m, velocity m/s, azimuth rad, amplitude).

    Transmitters fire in turn within each chirp loop, so a transmitter slot m lags
    the loop start by m / tx_count of a loop.
    """
    n = np.arange(cfg.samples_per_chirp)
    loops = np.arange(cfg.chirps_per_frame)[:, None]
    virtual = np.arange(cfg.virtual_antennas)
    slot = (virtual // cfg.rx_count) / cfg.tx_count
    data = np.zeros((cfg.chirps_per_frame, cfg.virtual_antennas, cfg.samples_per_chirp), dtype=np.complex128)
    for rng_m, velocity, azimuth, amplitude in targets:
        beat = rng_m / cfg.range_resolution / cfg.samples_per_chirp
        doppler = np.pi * velocity / cfg.max_velocity * (loops + slot[None, :])
        spatial = np.pi * np.sin(azimuth) * virtual[None, :]
        phase = doppler + spatial
        data += amplitude * np.exp(1j * phase)[:, :, None] * np.exp(2j * np.pi * beat * n)[None, None, :]
    noise = rng.standard_normal(data.shape) + 1j * rng.standard_normal(data.shape)
    data = gain * (data + noise_std / np.sqrt(2.0) * noise)
    return serialize_adc(data, cfg)
