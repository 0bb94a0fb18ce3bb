"""Point extraction from BEV grids, CD / HD / F-Score, and residual statistics."""
import logging
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..exceptions import EmptyPointSetError, ParameterError
from .grid import as_grid

logger = logging.getLogger(__name__)

DISPLAY_SCALE = 255.0
WITHIN_BAND = 10.0


@dataclass(frozen=True)
class MetricsReport:
    cd: float
    hd: float
    fscore: float
    precision: float
    recall: float
    threshold_used: float
    empty_prediction: bool = False

    def as_row(self):
        return asdict(self)


@dataclass(frozen=True)
class ResidualStats:
    active_fraction: float
    value_range: float
    stddev: float
    frac_within_10: float
    degenerate: bool = False


def as_points(points, name='points'):
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(points) == 0:
        raise EmptyPointSetError(f"{name} is empty; metrics are undefined")
    if not np.all(np.isfinite(points)):
        raise ParameterError(f"{name} has non-finite coordinates")
    return points


def extract_points(image, threshold=0.1):
    """(row, col) of every pixel whose intensity exceeds ``threshold``."""
    if not (0 < threshold < 1):
        raise ParameterError(f"point threshold must lie in (0, 1), got {threshold}")
    image = as_grid(image, 'image')
    rows, cols = np.nonzero(image > threshold)
    if rows.size == 0:
        raise EmptyPointSetError(f"no pixel above threshold {threshold}")
    return np.column_stack([rows, cols]).astype(np.float64)


# ---------------------------
# nearest-neighbour distances
# ---------------------------
def _distance(a, b):
    d = a - b
    return np.sqrt(d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1])


def nn_distances_brute(p, q):
    """For each point of p, distance to its nearest point of q. O(|p| |q|)."""
    return _distance(p[:, None, :], q[None, :, :]).min(axis=1)


def nn_distances(p, q):
    """KD-tree search for the neighbour, distance recomputed with the brute-force formula."""
    _, idx = cKDTree(q).query(p, k=1)
    return _distance(p, q[idx])


def directed_distances(p, q, brute=False):
    p = as_points(p, 'p')
    q = as_points(q, 'q')
    finder = nn_distances_brute if brute else nn_distances
    return finder(p, q), finder(q, p)


def chamfer(p, q, brute=False):
    """Half the sum of both directed mean nearest-neighbour distances (pixels)."""
    d_pq, d_qp = directed_distances(p, q, brute)
    return 0.5 * (float(d_pq.mean()) + float(d_qp.mean()))


def hausdorff(p, q, brute=False):
    d_pq, d_qp = directed_distances(p, q, brute)
    return max(float(d_pq.max()), float(d_qp.max()))


def _precision_recall(d_pq, d_qp, tau):
    if tau <= 0:
        raise ParameterError(f"F-score threshold must be positive, got {tau}")
    precision = float(np.mean(d_pq <= tau))
    recall = float(np.mean(d_qp <= tau))
    if precision + recall == 0:
        return precision, recall, 0.0
    return precision, recall, 2.0 * precision * recall / (precision + recall)


def fscore(p, q, tau=2.0, brute=False):
    """Returns (precision, recall, F) at distance threshold ``tau``; p is the prediction."""
    return _precision_recall(*directed_distances(p, q, brute), tau)


def evaluate_points(pred, target, tau=2.0, brute=False):
    d_pq, d_qp = directed_distances(pred, target, brute)
    precision, recall, f = _precision_recall(d_pq, d_qp, tau)
    return MetricsReport(
        cd=0.5 * (float(d_pq.mean()) + float(d_qp.mean())),
        hd=max(float(d_pq.max()), float(d_qp.max())),
        fscore=f, precision=precision, recall=recall, threshold_used=tau)


def evaluate_frame(pred_image, target_image, point_threshold=0.1, tau=2.0):
    """Metrics of one predicted BEV against its target.

    An empty prediction scores the image diagonal for CD and HD and zero F-Score.
    """
    target = extract_points(target_image, point_threshold)
    try:
        pred = extract_points(pred_image, point_threshold)
    except EmptyPointSetError:
        h, w = np.shape(pred_image)
        diagonal = float(np.hypot(h, w))
        return MetricsReport(diagonal, diagonal, 0.0, 0.0, 0.0, tau, empty_prediction=True)
    return evaluate_points(pred, target, tau)


def aggregate(reports):
    """Mean of CD, HD, precision, recall and F-Score over frames."""
    if not reports:
        raise ParameterError("nothing to aggregate")
    keys = ('cd', 'hd', 'precision', 'recall', 'fscore')
    row = {key: float(np.mean([getattr(r, key) for r in reports])) for key in keys}
    row['frames'] = len(reports)
    row['empty_predictions'] = sum(r.empty_prediction for r in reports)
    return row


def residual_stats(r, activity_threshold=1.0):
    """Residual profile in 8-bit display units (values x 255) over active pixels."""
    display = as_grid(r, 'residual') * DISPLAY_SCALE
    active = display[np.abs(display) >= activity_threshold]
    if active.size == 0:
        return ResidualStats(0.0, 0.0, 0.0, 0.0, degenerate=True)
    return ResidualStats(
        active_fraction=active.size / display.size,
        value_range=float(active.max() - active.min()),
        stddev=float(active.std()),
        frac_within_10=float(np.mean(np.abs(active) <= WITHIN_BAND + 1e-9)))
