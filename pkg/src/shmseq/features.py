"""Damage-sensitive feature extraction: chunking, normalization, AR fitting.

A raw acceleration stream is split into fixed-size chunks. Each chunk is
standardized to zero mean / unit sample standard deviation and fitted with an
autoregressive model by ordinary least squares on the lagged regressors; the
fitted coefficients form one feature vector per chunk. Model order can be
fixed or chosen by AIC on healthy-regime data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import SingularDesign, ZeroVariance

DEFAULT_STD_FLOOR = 1e-12


@dataclass
class SignalChunk:
    """One fixed-length window of a single sensor's signal."""

    sensor_id: int
    chunk_index: int
    samples: np.ndarray
    sample_rate: float = 1.0

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=float).ravel()
        if self.samples.size < 2:
            raise ValueError("a chunk needs at least two samples")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")

    @property
    def size(self) -> int:
        return self.samples.size


@dataclass
class ArModel:
    """Fitted autoregressive model of one chunk."""

    order: int
    coefficients: np.ndarray
    residual_variance: float

    def __post_init__(self) -> None:
        self.coefficients = np.asarray(self.coefficients, dtype=float).ravel()
        if self.order < 1:
            raise ValueError("AR order must be >= 1")
        if self.coefficients.size != self.order:
            raise ValueError("coefficient count must equal the order")
        if self.residual_variance < 0:
            raise ValueError("residual variance must be non-negative")


@dataclass
class DsfVector:
    """Feature vector of one sensor at one detector time step."""

    sensor_id: int
    step: int
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.atleast_1d(np.asarray(self.values, dtype=float))
        if self.values.size < 1 or not np.all(np.isfinite(self.values)):
            raise ValueError("feature vector must be non-empty and finite")

    @property
    def dim(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class DsfConfig:
    """Extraction settings: chunk size, AR order, optional coefficient subset.

    ``coef_indices`` selects 1-based AR coefficient indices; by default all
    ``order`` coefficients are used. The feature dimension is fixed by the
    config for the whole stream.
    """

    chunk_size: int
    order: int = 7
    coef_indices: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.order < 1:
            raise ValueError("AR order must be >= 1")
        if self.chunk_size <= self.order + 1:
            raise ValueError("chunk_size must exceed order + 1")
        if self.coef_indices is not None:
            idx = tuple(sorted(set(int(i) for i in self.coef_indices)))
            if not idx or idx[0] < 1 or idx[-1] > self.order:
                raise ValueError("coef_indices must be within 1..order")
            object.__setattr__(self, "coef_indices", idx)

    @property
    def dim(self) -> int:
        return self.order if self.coef_indices is None else len(self.coef_indices)


def normalize_chunk(chunk: SignalChunk, std_floor: float = DEFAULT_STD_FLOOR) -> np.ndarray:
    """Standardize a chunk to zero mean and unit sample (n-1) standard deviation.

    Raises ZeroVariance when the chunk standard deviation is below
    ``std_floor``, which signals a dead or saturated sensor.
    """
    x = chunk.samples
    mu = float(x.mean())
    sigma = float(x.std(ddof=1))
    if sigma < std_floor:
        raise ZeroVariance(
            f"sensor {chunk.sensor_id} chunk {chunk.chunk_index}: "
            f"standard deviation {sigma:.3e} below floor {std_floor:.0e}"
        )
    return (x - mu) / sigma


def fit_ar(normalized: np.ndarray, p: int) -> ArModel:
    """Fit an AR(p) model by least squares over the lagged regressors.

    The input is expected to be a normalized (zero-mean) chunk, so no
    intercept term is included. The coefficients minimize the sum of squared
    one-step prediction residuals over the last M - p samples and the
    residual variance is RSS / (M - p).
    """
    x = np.asarray(normalized, dtype=float).ravel()
    m_len = x.size
    if p < 1:
        raise ValueError("AR order must be >= 1")
    if m_len <= p + 1:
        raise ValueError(f"need more than {p + 1} samples to fit AR({p}), got {m_len}")
    design = np.stack([x[p - j : m_len - j] for j in range(1, p + 1)], axis=1)
    target = x[p:]
    coef, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < p:
        raise SingularDesign(f"lag regressor matrix is rank deficient (rank {rank} < {p})")
    resid = target - design @ coef
    rss = float(resid @ resid)
    return ArModel(order=p, coefficients=coef, residual_variance=rss / (m_len - p))


def aic_values(chunks: Sequence[SignalChunk], p_max: int) -> np.ndarray:
    """Per-order AIC curve, averaged across chunks, for orders 1..p_max.

    Each chunk contributes M * ln(RSS(p) / (M - p)) + 2p, i.e. the log of
    the per-residual variance. Normalizing RSS by the residual count M - p
    (not M) matters: RSS loses one term per added order, and dividing by M
    would cancel the 2p penalty almost exactly, leaving order selection to
    a coin flip.
    """
    if p_max < 1:
        raise ValueError("p_max must be >= 1")
    if not chunks:
        raise ValueError("need at least one chunk")
    curves = np.empty((len(chunks), p_max))
    for i, chunk in enumerate(chunks):
        z = normalize_chunk(chunk)
        m_len = z.size
        for p in range(1, p_max + 1):
            with np.errstate(divide="ignore"):
                curves[i, p - 1] = m_len * np.log(fit_ar(z, p).residual_variance) + 2 * p
    return curves.mean(axis=0)


def select_order(chunks: Sequence[SignalChunk], p_max: int) -> int:
    """Order with the smallest average AIC; ties break toward the smaller order.

    The chunks must come from the healthy regime only: order selection on
    post-damage data is not meaningful because the damage case is unknown
    in advance.
    """
    return int(np.argmin(aic_values(chunks, p_max))) + 1


def iter_chunks(
    samples: np.ndarray,
    chunk_size: int,
    sensor_id: int = 0,
    sample_rate: float = 1.0,
) -> Iterator[SignalChunk]:
    """Split a stream into complete chunks; a trailing partial chunk is dropped."""
    x = np.asarray(samples, dtype=float).ravel()
    for k in range(x.size // chunk_size):
        yield SignalChunk(
            sensor_id=sensor_id,
            chunk_index=k + 1,
            samples=x[k * chunk_size : (k + 1) * chunk_size],
            sample_rate=sample_rate,
        )


def extract_dsf_stream(
    samples: np.ndarray,
    config: DsfConfig,
    *,
    sensor_id: int = 0,
    sample_rate: float = 1.0,
) -> list[DsfVector]:
    """Turn a raw stream into one feature vector per complete chunk.

    Extraction is deterministic: identical input bytes produce identical
    feature sequences. Chunk-level failures are re-raised with the chunk
    index attached.
    """
    out: list[DsfVector] = []
    for chunk in iter_chunks(samples, config.chunk_size, sensor_id, sample_rate):
        try:
            z = normalize_chunk(chunk)
            model = fit_ar(z, config.order)
        except (ZeroVariance, SingularDesign) as err:
            annotated = type(err)(f"chunk {chunk.chunk_index}: {err}")
            annotated.chunk_index = chunk.chunk_index
            raise annotated from err
        if config.coef_indices is None:
            values = model.coefficients
        else:
            values = model.coefficients[np.asarray(config.coef_indices) - 1]
        out.append(DsfVector(sensor_id=sensor_id, step=chunk.chunk_index, values=values))
    return out
