"""ASCII 2D Plot3D grids (single or multi block, optional block-count header).

Binary files are rejected. Coordinates are stored i-fastest, all x values of a
block followed by all y values (and z values, which are read and dropped, when
a block is declared with a unit third dimension).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ParseError


@dataclass(frozen=True)
class Plot3DBlock:
    x: np.ndarray  # (nj, ni)
    y: np.ndarray

    @property
    def shape(self):
        return self.x.shape


class _Tokens:
    """Whitespace token stream that remembers source line numbers."""

    def __init__(self, text, path):
        self.path = path
        self.lines = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            toks = line.split()
            if toks:
                self.lines.append((lineno, toks))
        self.pos = 0  # index into self.lines
        self.last_line = self.lines[-1][0] if self.lines else 0

    def next_line(self):
        if self.pos >= len(self.lines):
            raise ParseError("unexpected end of file", line=self.last_line + 1, path=self.path)
        item = self.lines[self.pos]
        self.pos += 1
        return item

    def read_floats(self, count):
        out = np.empty(count)
        filled = 0
        while filled < count:
            if self.pos >= len(self.lines):
                raise ParseError(
                    f"expected {count} coordinate values, found only {filled}",
                    line=self.last_line, path=self.path)
            lineno, toks = self.lines[self.pos]
            take = min(len(toks), count - filled)
            try:
                out[filled:filled + take] = [float(t.replace("D", "E").replace("d", "e"))
                                             for t in toks[:take]]
            except ValueError as exc:
                raise ParseError(f"bad coordinate value ({exc})", line=lineno, path=self.path) from None
            if take < len(toks):
                # a line straddling two arrays: keep the remainder for the next read
                self.lines[self.pos] = (lineno, toks[take:])
            else:
                self.pos += 1
            filled += take
        return out


def _ints(toks, lineno, path):
    try:
        return [int(t) for t in toks]
    except ValueError:
        raise ParseError(f"expected integer dimensions, got {' '.join(toks)!r}",
                         line=lineno, path=path) from None


def read_plot3d(path):
    """Parse a 2D ASCII Plot3D grid file into a list of blocks."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigurationError(f"cannot read grid file {path}: {exc.strerror}") from None
    if b"\x00" in raw[:4096]:
        raise ParseError("binary Plot3D files are not supported", path=path)
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError:
        raise ParseError("file is not ASCII text", path=path) from None
    tokens = _Tokens(text, path)

    lineno, toks = tokens.next_line()
    first = _ints(toks, lineno, path)
    if len(first) == 1:
        nblocks = first[0]
        if nblocks < 1:
            raise ParseError(f"invalid block count {nblocks}", line=lineno, path=path)
        dims = []
        # dimensions may be one line per block or all on one line
        flat = []
        while len(flat) < 2 * nblocks:
            lineno, toks = tokens.next_line()
            flat.extend((lineno, v) for v in _ints(toks, lineno, path))
        per = len(flat) // nblocks
        if per not in (2, 3) or len(flat) != per * nblocks:
            raise ParseError("dimension header does not match block count", line=lineno, path=path)
        for b in range(nblocks):
            chunk = flat[b * per:(b + 1) * per]
            dims.append(([v for _, v in chunk], chunk[0][0]))
    elif len(first) in (2, 3):
        dims = [(first, lineno)]
    else:
        raise ParseError(f"malformed header {' '.join(toks)!r}", line=lineno, path=path)

    blocks = []
    for d, dline in dims:
        if len(d) == 3 and d[2] != 1:
            raise ParseError(f"3D block (kdim={d[2]}) in a 2D grid file", line=dline, path=path)
        ni, nj = d[0], d[1]
        if ni < 2 or nj < 2:
            raise ParseError(f"block dimensions {ni}x{nj} too small", line=dline, path=path)
        n = ni * nj
        x = tokens.read_floats(n).reshape(nj, ni)
        y = tokens.read_floats(n).reshape(nj, ni)
        if len(d) == 3:
            tokens.read_floats(n)
        blocks.append(Plot3DBlock(x, y))
    if tokens.pos < len(tokens.lines):
        lineno, _ = tokens.lines[tokens.pos]
        raise ParseError("trailing data after last block", line=lineno, path=path)
    return blocks


def write_plot3d(path, blocks, header=True):
    """Write blocks given as (x, y) arrays of shape (nj, ni)."""
    lines = []
    if header:
        lines.append(str(len(blocks)))
    elif len(blocks) != 1:
        raise ValueError("multi-block files need the block-count header")
    for x, y in blocks:
        nj, ni = np.shape(x)
        lines.append(f"{ni} {nj}")
    for x, y in blocks:
        for arr in (x, y):
            vals = np.asarray(arr, dtype=float).ravel()
            for k in range(0, vals.size, 4):
                lines.append(" ".join(f"{v:.17e}" for v in vals[k:k + 4]))
    Path(path).write_text("\n".join(lines) + "\n")
