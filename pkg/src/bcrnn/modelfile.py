"""Bit-exact binary model serialization.

Little-endian fixed-width binary: a small header (magic "ERNN", format
version, cell tag, flags, dimension table), per-matrix records carrying
block-circulant generators as float64, per-vector records for biases and
peephole diagonals, an optional quantization section (per-tensor fixed
point formats plus integer codes), and a trailing CRC32 over everything
before it. Weights travel in the time domain; spectra are recomputed on
load.

The unconstrained readout head is stored as a block-size-1 matrix record:
any dense matrix is exactly block-circulant at block size 1.
"""

import struct
import zlib

import numpy as np

from .admm import TrainedModel
from .cells import GRUParams, LSTMParams
from .circulant import BlockCirculantMatrix
from .errors import ModelFileError
from .quantize import FixedPointFormat, QuantizationSpec

MAGIC = b"ERNN"
VERSION = 1

CELL_TAGS = {"lstm": 1, "gru": 2}
CELL_NAMES = {v: k for k, v in CELL_TAGS.items()}

FLAG_PROJECTION = 1
FLAG_QUANTIZED = 2
FLAG_TANH_GATE = 4

MATRIX_ROLES = {"fused": 1, "proj": 2, "cand_x": 3, "cand_c": 4, "head": 5}
VECTOR_ROLES = {
    "w_ic": 1, "w_fc": 2, "w_oc": 3,
    "b_i": 4, "b_f": 5, "b_c_lstm": 6, "b_o": 7,
    "b_r": 8, "b_z": 9, "b_c_gru": 10,
    "head_bias": 11,
}
_ROLE_TO_MATRIX = {v: k for k, v in MATRIX_ROLES.items()}
_ROLE_TO_VECTOR = {v: k for k, v in VECTOR_ROLES.items()}


def _pack_matrix(role, matrix: BlockCirculantMatrix):
    head = struct.pack("<BIII", MATRIX_ROLES[role], matrix.rows, matrix.cols,
                       matrix.block_size)
    return head + np.ascontiguousarray(matrix.generators, dtype="<f8").tobytes()


def _pack_vector(role, vec):
    vec = np.ascontiguousarray(vec, dtype="<f8")
    return struct.pack("<BI", VECTOR_ROLES[role], vec.shape[0]) + vec.tobytes()


def _pack_name(name):
    raw = name.encode("utf-8")
    if len(raw) > 255:
        raise ValueError(f"tensor name too long: {name!r}")
    return struct.pack("<B", len(raw)) + raw


def _dense_as_block1(dense):
    dense = np.asarray(dense, dtype=np.float64)
    return BlockCirculantMatrix(dense.shape[0], dense.shape[1], 1,
                                dense[:, :, None])


def serialize_model(model: TrainedModel) -> bytes:
    cell = model.cell
    flags = 0
    chunks = []
    if isinstance(cell, LSTMParams):
        tag = CELL_TAGS["lstm"]
        proj_dim = 0
        if cell.projection is not None:
            flags |= FLAG_PROJECTION
            proj_dim = cell.projection.rows
        if cell.gate_activation == "tanh":
            flags |= FLAG_TANH_GATE
        matrices = [("fused", cell.fused)]
        if cell.projection is not None:
            matrices.append(("proj", cell.projection))
        vectors = [("w_ic", cell.w_ic), ("w_fc", cell.w_fc), ("w_oc", cell.w_oc),
                   ("b_i", cell.b_i), ("b_f", cell.b_f), ("b_c_lstm", cell.b_c),
                   ("b_o", cell.b_o)]
    elif isinstance(cell, GRUParams):
        tag = CELL_TAGS["gru"]
        proj_dim = 0
        matrices = [("fused", cell.fused), ("cand_x", cell.candidate_x),
                    ("cand_c", cell.candidate_c)]
        vectors = [("b_r", cell.b_r), ("b_z", cell.b_z), ("b_c_gru", cell.b_c)]
    else:
        raise TypeError(f"unsupported cell type {type(cell)!r}")
    matrices.append(("head", _dense_as_block1(model.head_w)))
    vectors.append(("head_bias", model.head_b))
    if model.quantization is not None:
        flags |= FLAG_QUANTIZED

    chunks.append(MAGIC)
    chunks.append(struct.pack("<HBB", VERSION, tag, flags))
    chunks.append(struct.pack("<IIII", cell.input_dim, cell.hidden_dim, proj_dim, 1))
    chunks.append(struct.pack("<H", len(matrices)))
    for role, matrix in matrices:
        chunks.append(_pack_matrix(role, matrix))
    chunks.append(struct.pack("<H", len(vectors)))
    for role, vec in vectors:
        chunks.append(_pack_vector(role, vec))
    if model.quantization is not None:
        chunks.append(_pack_quantization(model.quantization))
    payload = b"".join(chunks)
    return payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)


def _pack_quantization(qspec: QuantizationSpec):
    out = [struct.pack("<BH", qspec.bits,
                       0 if qspec.pwl_segments is None else qspec.pwl_segments)]
    names = sorted(qspec.formats)
    out.append(struct.pack("<H", len(names)))
    for name in names:
        fmt = qspec.formats[name]
        out.append(_pack_name(name))
        out.append(struct.pack("<BBd", fmt.total_bits, fmt.frac_bits, fmt.scale))
    codes = qspec.codes or {}
    names = sorted(codes)
    out.append(struct.pack("<H", len(names)))
    for name in names:
        arr = np.ascontiguousarray(codes[name], dtype="<i4")
        out.append(_pack_name(name))
        out.append(struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise ModelFileError("model file is truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, dtype, count):
        nbytes = np.dtype(dtype).itemsize * count
        return np.frombuffer(self.take(nbytes), dtype=dtype).copy()


def deserialize_model(data: bytes) -> TrainedModel:
    if len(data) < 8 or data[:4] != MAGIC:
        raise ModelFileError("bad magic: not a model file")
    payload, crc_bytes = data[:-4], data[-4:]
    (crc,) = struct.unpack("<I", crc_bytes)
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise ModelFileError("checksum mismatch: model file is corrupt")
    r = _Reader(payload)
    r.take(4)  # magic
    version, tag, flags = r.unpack("<HBB")
    if version != VERSION:
        raise ModelFileError(f"unsupported format version {version}")
    if tag not in CELL_NAMES:
        raise ModelFileError(f"unknown cell tag {tag}")
    input_dim, hidden, proj_dim, n_layers = r.unpack("<IIII")
    if n_layers != 1:
        raise ModelFileError(f"unsupported layer count {n_layers}")

    (n_matrices,) = r.unpack("<H")
    matrices = {}
    for _ in range(n_matrices):
        role, m, n, block = r.unpack("<BIII")
        if role not in _ROLE_TO_MATRIX:
            raise ModelFileError(f"unknown matrix role {role}")
        if block == 0 or m % block or n % block:
            raise ModelFileError("matrix record has a non-dividing block size")
        gen = r.array("<f8", (m // block) * (n // block) * block)
        matrices[_ROLE_TO_MATRIX[role]] = BlockCirculantMatrix(
            m, n, block, gen.reshape(m // block, n // block, block)
        )

    (n_vectors,) = r.unpack("<H")
    vectors = {}
    for _ in range(n_vectors):
        role, length = r.unpack("<BI")
        if role not in _ROLE_TO_VECTOR:
            raise ModelFileError(f"unknown vector role {role}")
        vectors[_ROLE_TO_VECTOR[role]] = r.array("<f8", length)

    quantization = None
    if flags & FLAG_QUANTIZED:
        quantization = _read_quantization(r)
    if r.pos != len(payload):
        raise ModelFileError("trailing bytes after the last section")

    try:
        if tag == CELL_TAGS["lstm"]:
            gate = "tanh" if flags & FLAG_TANH_GATE else "sigmoid"
            proj = matrices.get("proj") if flags & FLAG_PROJECTION else None
            cell = LSTMParams(matrices["fused"], vectors["w_ic"], vectors["w_fc"],
                              vectors["w_oc"], vectors["b_i"], vectors["b_f"],
                              vectors["b_c_lstm"], vectors["b_o"], proj, input_dim, gate)
        else:
            cell = GRUParams(matrices["fused"], matrices["cand_x"], matrices["cand_c"],
                             vectors["b_r"], vectors["b_z"], vectors["b_c_gru"], input_dim)
    except KeyError as exc:
        raise ModelFileError(f"missing record: {exc}") from exc
    if cell.hidden_dim != hidden:
        raise ModelFileError("dimension table disagrees with the fused matrix")
    head = matrices.get("head")
    if head is None or "head_bias" not in vectors:
        raise ModelFileError("missing readout head records")
    return TrainedModel(cell, head.generators[:, :, 0].copy(), vectors["head_bias"],
                        quantization)


def _read_quantization(r: _Reader) -> QuantizationSpec:
    bits, segments = r.unpack("<BH")
    (n_formats,) = r.unpack("<H")
    formats = {}
    for _ in range(n_formats):
        (name_len,) = r.unpack("<B")
        name = r.take(name_len).decode("utf-8")
        total, frac, scale = r.unpack("<BBd")
        formats[name] = FixedPointFormat(total, frac, scale)
    (n_codes,) = r.unpack("<H")
    codes = {}
    for _ in range(n_codes):
        (name_len,) = r.unpack("<B")
        name = r.take(name_len).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        arr = r.array("<i4", int(np.prod(shape)) if ndim else 1)
        codes[name] = arr.reshape(shape)
    return QuantizationSpec(bits, formats, None if segments == 0 else segments, codes)


def write_model(path, model: TrainedModel):
    blob = serialize_model(model)
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)


def read_model(path) -> TrainedModel:
    with open(path, "rb") as fh:
        return deserialize_model(fh.read())
