"""File formats: LRTF binary tensors, format containers, and JSON sidecars.

LRTF layout: magic ``LRTF``, version (u32 little-endian, currently 1),
order d (u32), d mode sizes (u64), then the entries as little-endian
float64 in canonical order (last mode fastest). TT/CP/Tucker containers
reuse LRTF payloads under the magics ``LRTT`` / ``LRCP`` / ``LRTK``.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .core import DenseTensor
from .formats import CPTensor, TTTensor, TuckerTensor
from .reduction import SnapshotSet
from .rom import (
    AffineOperator,
    AffineVector,
    CoefficientFunction,
    ParameterDomain,
    ParametricLinearModel,
)

FORMAT_VERSION = 1


def atomic_write_bytes(path, payload: bytes):
    """Write a file via a temp-then-rename so readers never see partials."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def _tensor_payload(t: DenseTensor) -> bytes:
    header = b"LRTF"
    header += struct.pack("<II", FORMAT_VERSION, t.order)
    header += struct.pack(f"<{t.order}Q", *t.shape)
    data = np.ascontiguousarray(t.array, dtype="<f8").tobytes()
    return header + data


def _read_tensor_payload(buf: bytes, offset: int = 0):
    if buf[offset:offset + 4] != b"LRTF":
        raise ValueError("not an LRTF payload")
    version, order = struct.unpack_from("<II", buf, offset + 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported LRTF version {version}")
    shape = struct.unpack_from(f"<{order}Q", buf, offset + 12)
    count = int(np.prod(shape))
    start = offset + 12 + 8 * order
    end = start + 8 * count
    data = np.frombuffer(buf[start:end], dtype="<f8")
    return DenseTensor.from_flat(shape, data), end


def write_lrtf(path, t) -> None:
    """Write a dense tensor (DenseTensor or ndarray) as an LRTF file."""
    if not isinstance(t, DenseTensor):
        t = DenseTensor(np.asarray(t, dtype=np.float64))
    atomic_write_bytes(path, _tensor_payload(t))


def read_lrtf(path) -> DenseTensor:
    buf = Path(path).read_bytes()
    tensor, end = _read_tensor_payload(buf)
    if end != len(buf):
        raise ValueError("trailing bytes after LRTF payload")
    return tensor


def _container_header(magic, shape, ranks) -> bytes:
    out = magic
    out += struct.pack("<II", FORMAT_VERSION, len(shape))
    out += struct.pack(f"<{len(shape)}Q", *shape)
    out += struct.pack("<I", len(ranks))
    if ranks:
        out += struct.pack(f"<{len(ranks)}Q", *ranks)
    return out


def _read_container_header(buf, magic):
    if buf[:4] != magic:
        raise ValueError(f"expected magic {magic!r}, got {buf[:4]!r}")
    version, order = struct.unpack_from("<II", buf, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported container version {version}")
    shape = struct.unpack_from(f"<{order}Q", buf, 12)
    offset = 12 + 8 * order
    (n_ranks,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    ranks = struct.unpack_from(f"<{n_ranks}Q", buf, offset) if n_ranks else ()
    offset += 8 * n_ranks
    return shape, ranks, offset


def write_lrtt(path, t: TTTensor) -> None:
    payload = _container_header(b"LRTT", t.shape, t.ranks)
    for core in t.cores:
        payload += _tensor_payload(DenseTensor(core))
    atomic_write_bytes(path, payload)


def read_lrtt(path) -> TTTensor:
    buf = Path(path).read_bytes()
    shape, _, offset = _read_container_header(buf, b"LRTT")
    cores = []
    for _ in shape:
        core, offset = _read_tensor_payload(buf, offset)
        cores.append(core.array)
    return TTTensor(cores)


def write_lrcp(path, t: CPTensor) -> None:
    payload = _container_header(b"LRCP", t.shape, (t.rank,))
    payload += _tensor_payload(DenseTensor(t.weights.reshape(-1)))
    for factor in t.factors:
        payload += _tensor_payload(DenseTensor(factor))
    atomic_write_bytes(path, payload)


def read_lrcp(path) -> CPTensor:
    buf = Path(path).read_bytes()
    shape, _, offset = _read_container_header(buf, b"LRCP")
    weights, offset = _read_tensor_payload(buf, offset)
    factors = []
    for _ in shape:
        factor, offset = _read_tensor_payload(buf, offset)
        factors.append(factor.array)
    return CPTensor(weights.array, factors)


def write_lrtk(path, t: TuckerTensor) -> None:
    payload = _container_header(b"LRTK", t.shape, t.ranks)
    payload += _tensor_payload(t.core)
    for factor in t.factors:
        payload += _tensor_payload(DenseTensor(factor))
    atomic_write_bytes(path, payload)


def read_lrtk(path) -> TuckerTensor:
    buf = Path(path).read_bytes()
    shape, _, offset = _read_container_header(buf, b"LRTK")
    core, offset = _read_tensor_payload(buf, offset)
    factors = []
    for _ in shape:
        factor, offset = _read_tensor_payload(buf, offset)
        factors.append(factor.array)
    return TuckerTensor(core, factors)


# -- snapshot sets ----------------------------------------------------------


def write_snapshots(path, snapshots: SnapshotSet) -> None:
    """LRTF matrix plus a ``.json`` sidecar with weights and parameters."""
    path = Path(path)
    write_lrtf(path, DenseTensor(snapshots.vectors))
    sidecar = {
        "weights": snapshots.weights.tolist(),
        "params": None if snapshots.params is None
        else snapshots.params.tolist(),
    }
    atomic_write_text(path.with_suffix(path.suffix + ".json"),
                      json.dumps(sidecar, indent=2) + "\n")


def read_snapshots(path) -> SnapshotSet:
    path = Path(path)
    vectors = read_lrtf(path).array
    sidecar = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    params = sidecar.get("params")
    return SnapshotSet(
        vectors, np.asarray(sidecar["weights"], dtype=np.float64),
        None if params is None else np.asarray(params, dtype=np.float64),
    )


# -- parametric models ------------------------------------------------------


def write_model(directory, model: ParametricLinearModel) -> None:
    """JSON description referencing LRTF files for matrices and vectors."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    op_terms = []
    for i, (mat, coeff) in enumerate(
        zip(model.operator.arrays, model.operator.coefficients)
    ):
        name = f"A_{i}.lrtf"
        write_lrtf(directory / name, DenseTensor(mat))
        op_terms.append({"matrix": name, "coefficient": coeff.to_dict()})
    rhs_terms = []
    for i, (vec, coeff) in enumerate(
        zip(model.rhs.arrays, model.rhs.coefficients)
    ):
        name = f"b_{i}.lrtf"
        write_lrtf(directory / name, DenseTensor(vec))
        rhs_terms.append({"vector": name, "coefficient": coeff.to_dict()})
    manifest = {
        "domain": model.domain.to_dict(),
        "operator": op_terms,
        "rhs": rhs_terms,
        "spd": model.spd,
        "alpha_lb": model.alpha_lb,
        "beta_ub": model.beta_ub,
    }
    atomic_write_text(directory / "model.json",
                      json.dumps(manifest, indent=2) + "\n")


def read_model(directory) -> ParametricLinearModel:
    directory = Path(directory)
    manifest = json.loads((directory / "model.json").read_text())
    domain = ParameterDomain.from_dict(manifest["domain"])
    op_terms = [
        (read_lrtf(directory / term["matrix"]).array,
         CoefficientFunction.from_dict(term["coefficient"]))
        for term in manifest["operator"]
    ]
    rhs_terms = [
        (read_lrtf(directory / term["vector"]).array,
         CoefficientFunction.from_dict(term["coefficient"]))
        for term in manifest["rhs"]
    ]
    return ParametricLinearModel(
        AffineOperator(op_terms, domain), AffineVector(rhs_terms, domain),
        spd=manifest.get("spd", False),
        alpha_lb=manifest.get("alpha_lb"), beta_ub=manifest.get("beta_ub"),
    )


# -- reduced models ---------------------------------------------------------


def write_reduced_model(directory, rm) -> None:
    """Bundle of LRTF blocks plus a JSON manifest with the coefficients."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_lrtf(directory / "basis.lrtf", DenseTensor(rm.space.basis))
    write_lrtf(directory / "gram.lrtf", DenseTensor(rm._gram))
    write_lrtf(directory / "cross.lrtf", DenseTensor(rm._cross))
    write_lrtf(directory / "rhs_gram.lrtf", DenseTensor(rm._rhs_gram))
    manifest = {
        "domain": rm.domain.to_dict(),
        "alpha": [c.to_dict() for c in rm._alpha],
        "beta": [c.to_dict() for c in rm._beta],
    }
    atomic_write_text(directory / "reduced.json",
                      json.dumps(manifest, indent=2) + "\n")


def read_reduced_model(directory):
    from .reduction import Subspace
    from .rom import ReducedModel

    directory = Path(directory)
    manifest = json.loads((directory / "reduced.json").read_text())
    basis = read_lrtf(directory / "basis.lrtf").array
    return ReducedModel(
        Subspace(basis),
        read_lrtf(directory / "gram.lrtf").array,
        read_lrtf(directory / "cross.lrtf").array,
        read_lrtf(directory / "rhs_gram.lrtf").array,
        [CoefficientFunction.from_dict(c) for c in manifest["alpha"]],
        [CoefficientFunction.from_dict(c) for c in manifest["beta"]],
        ParameterDomain.from_dict(manifest["domain"]),
    )
