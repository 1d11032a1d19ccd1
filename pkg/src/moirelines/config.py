"""Potential definition files: a small sectioned key-value format.

The CLI and the tests parse potentials through this one module so a file
means exactly the same thing everywhere.  The format is line oriented:

    # comment
    [v.lattice]
    e1 = 6.283185307179586 0.0
    e2 = 0.0 6.283185307179586
    [v.terms]
    term = 1 0 1.0 0.0        # n1 n2 amplitude [phase]
    [u.lattice]
    e1 = 6.283185307179586 0.0
    e2 = 0.0 6.283185307179586
    [u.terms]
    term = 1 0 0.05
    [transform]
    alpha = 0.7
    shift = 0.0 0.0
    [combiner]
    kind = sum                 # sum | weighted | product
    # weighted only:
    # c1 = 1.0
    # c2 = 0.5

``term`` may repeat; every other key may not.  Unknown sections or keys are
errors, and every error message carries the offending line number.  Table
combiners are API-only: a sampled table has no faithful flat-text form.
"""

from __future__ import annotations

from dataclasses import dataclass

from .geometry import EuclideanTransform, Lattice2
from .potential import (
    Combiner,
    FourierTerm,
    PeriodicPotential,
    Product,
    Sum,
    SuperpositionPotential,
    WeightedSum,
)

_KNOWN = {
    "v.lattice": {"e1", "e2"},
    "u.lattice": {"e1", "e2"},
    "v.terms": {"term"},
    "u.terms": {"term"},
    "transform": {"alpha", "shift"},
    "combiner": {"kind", "c1", "c2"},
}

_REQUIRED_KEYS = [
    ("v.lattice", "e1"),
    ("v.lattice", "e2"),
    ("u.lattice", "e1"),
    ("u.lattice", "e2"),
    ("v.terms", "term"),
    ("u.terms", "term"),
]


class ConfigError(ValueError):
    """Malformed potential definition; message includes the line number."""

    def __init__(self, lineno: int | None, message: str):
        self.lineno = lineno
        where = f"line {lineno}: " if lineno is not None else ""
        super().__init__(f"{where}{message}")


@dataclass(frozen=True)
class ParsedConfig:
    """A parsed potential plus the raw fields for manifests."""

    superposition: SuperpositionPotential
    raw: dict


def _parse_lines(text: str) -> list[tuple[int, str, str, list[str]]]:
    """(lineno, section, key, value tokens) for every assignment."""
    entries = []
    section = None
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(lineno, f"unterminated section header {rawline!r}")
            section = line[1:-1].strip()
            if section not in _KNOWN:
                raise ConfigError(
                    lineno,
                    f"unknown section [{section}]; expected one of "
                    + ", ".join(sorted(_KNOWN)),
                )
            continue
        if "=" not in line:
            raise ConfigError(lineno, f"expected 'key = values', got {rawline!r}")
        if section is None:
            raise ConfigError(lineno, "assignment before any [section] header")
        key, _, rhs = line.partition("=")
        key = key.strip()
        if key not in _KNOWN[section]:
            raise ConfigError(
                lineno,
                f"unknown key {key!r} in [{section}]; expected one of "
                + ", ".join(sorted(_KNOWN[section])),
            )
        entries.append((lineno, section, key, rhs.split()))
    return entries


def _floats(lineno, section, key, tokens, count) -> list[float]:
    if len(tokens) != count:
        raise ConfigError(
            lineno, f"{section}.{key} needs {count} numbers, got {len(tokens)}"
        )
    try:
        return [float(t) for t in tokens]
    except ValueError as err:
        raise ConfigError(lineno, f"{section}.{key}: {err}") from None


def _term(lineno, section, tokens) -> FourierTerm:
    if len(tokens) not in (3, 4):
        raise ConfigError(
            lineno,
            f"{section}.term needs 'n1 n2 amplitude [phase]', got {len(tokens)} fields",
        )
    try:
        n1, n2 = int(tokens[0]), int(tokens[1])
        amp = float(tokens[2])
        phase = float(tokens[3]) if len(tokens) == 4 else 0.0
    except ValueError as err:
        raise ConfigError(lineno, f"{section}.term: {err}") from None
    return FourierTerm(n1, n2, amp, phase)


def parse_config(text: str) -> ParsedConfig:
    entries = _parse_lines(text)
    singles: dict[tuple[str, str], tuple[int, list[str]]] = {}
    terms: dict[str, list[FourierTerm]] = {"v.terms": [], "u.terms": []}
    raw: dict = {"v": {"terms": []}, "u": {"terms": []}, "transform": {}, "combiner": {}}

    for lineno, section, key, tokens in entries:
        if key == "term":
            t = _term(lineno, section, tokens)
            terms[section].append(t)
            raw[section[0]]["terms"].append(
                [t.n1, t.n2, t.amplitude, t.phase]
            )
            continue
        if (section, key) in singles:
            raise ConfigError(
                lineno,
                f"{section}.{key} given twice (first on line {singles[(section, key)][0]})",
            )
        singles[(section, key)] = (lineno, tokens)

    def need(section, key):
        got = singles.get((section, key))
        if got is None and (section, key) in _REQUIRED_KEYS:
            raise ConfigError(None, f"missing required {section}.{key}")
        return got

    for section, key in _REQUIRED_KEYS:
        if key == "term":
            if not terms[section]:
                raise ConfigError(None, f"missing required {section}.term")
        else:
            need(section, key)

    def lattice(prefix: str) -> Lattice2:
        ln1, tok1 = singles[(f"{prefix}.lattice", "e1")]
        ln2, tok2 = singles[(f"{prefix}.lattice", "e2")]
        e1 = _floats(ln1, f"{prefix}.lattice", "e1", tok1, 2)
        e2 = _floats(ln2, f"{prefix}.lattice", "e2", tok2, 2)
        raw[prefix]["e1"] = e1
        raw[prefix]["e2"] = e2
        try:
            return Lattice2(e1, e2)
        except ValueError as err:
            raise ConfigError(ln2, f"{prefix}.lattice: {err}") from None

    lat_v = lattice("v")
    lat_u = lattice("u")
    v = PeriodicPotential(lat_v, tuple(terms["v.terms"]))
    u = PeriodicPotential(lat_u, tuple(terms["u.terms"]))

    alpha = 0.0
    shift = [0.0, 0.0]
    if (got := singles.get(("transform", "alpha"))) is not None:
        (alpha,) = _floats(got[0], "transform", "alpha", got[1], 1)
    if (got := singles.get(("transform", "shift"))) is not None:
        shift = _floats(got[0], "transform", "shift", got[1], 2)
    raw["transform"] = {"alpha": alpha, "shift": shift}

    kind = "sum"
    if (got := singles.get(("combiner", "kind"))) is not None:
        if len(got[1]) != 1:
            raise ConfigError(got[0], "combiner.kind needs exactly one word")
        kind = got[1][0].lower()
    combiner: Combiner
    if kind == "sum":
        combiner = Sum()
    elif kind == "product":
        combiner = Product()
    elif kind == "weighted":
        c1 = c2 = 1.0
        if (got := singles.get(("combiner", "c1"))) is not None:
            (c1,) = _floats(got[0], "combiner", "c1", got[1], 1)
        if (got := singles.get(("combiner", "c2"))) is not None:
            (c2,) = _floats(got[0], "combiner", "c2", got[1], 1)
        combiner = WeightedSum(c1, c2)
    else:
        lineno = singles[("combiner", "kind")][0]
        raise ConfigError(lineno, f"unknown combiner kind {kind!r}")
    raw["combiner"] = {"kind": kind}
    if isinstance(combiner, WeightedSum):
        raw["combiner"]["c1"] = combiner.c1
        raw["combiner"]["c2"] = combiner.c2

    s = SuperpositionPotential(v, u, EuclideanTransform(alpha, shift), combiner)
    return ParsedConfig(superposition=s, raw=raw)


def load_config(path) -> tuple[ParsedConfig, bytes]:
    """Parse a potential definition file; also return the raw bytes for
    hashing into manifests."""
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as err:
        raise ConfigError(None, f"not a UTF-8 text file: {err}") from None
    return parse_config(text), data
