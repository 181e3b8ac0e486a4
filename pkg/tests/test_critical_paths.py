"""
Critical Path Tests — structural guarantees of the package
==========================================================
1. random generators are only built in core/streams.py
2. polynomial solves only live in core/polyroots.py
3. one ellipse test, one engine loop
4. no bare except
"""
import re
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
PACKAGES = ("raresim", "core")


def _sources():
    for pkg in PACKAGES:
        for path in sorted((ROOT / pkg).rglob("*.py")):
            yield path, path.read_text(encoding="utf-8")


def _offenders(pattern: str, allowed: str) -> list[str]:
    regex = re.compile(pattern, re.MULTILINE)
    return [str(p.relative_to(ROOT)) for p, src in _sources()
            if regex.search(src) and p.relative_to(ROOT).as_posix() != allowed]


class TestSingleSourceOfTruth:
    def test_generators_only_in_streams(self):
        bad = _offenders(r"default_rng\(|SeedSequence\(|Philox\(|np\.random\.(seed|rand|normal|uniform)\(",
                         "core/streams.py")
        assert bad == [], f"random generator built outside core/streams.py: {bad}"

    def test_roots_only_in_polyroots(self):
        bad = _offenders(r"np\.roots\(|linalg\.eigvals\(", "core/polyroots.py")
        assert bad == [], f"polynomial solve outside core/polyroots.py: {bad}"

    def test_ellipse_test_defined_once(self):
        bad = _offenders(r"^def ellipses_intersect\(", "raresim/scenario.py")
        assert bad == []

    def test_engine_loop_defined_once(self):
        bad = _offenders(r"^def execute_until\(", "raresim/shs.py")
        assert bad == []

    def test_splitting_uses_shared_engine(self):
        src = (ROOT / "raresim" / "splitting.py").read_text(encoding="utf-8")
        assert "execute_until" in src
        assert "integrate_step" not in src


class TestNoBareExcept:
    def test_no_bare_except(self):
        bad = _offenders(r"^\s*except\s*:", "")
        assert bad == [], f"bare except in {bad}"
