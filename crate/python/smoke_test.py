"""Smoke test for the uso_cbdc_py extension.

Build first:  cargo build -p uso-cbdc-py --features extension-module
Then run:     python3 python/smoke_test.py
The script imports an installed module if there is one, otherwise it loads
the shared library from target/.
"""

import hashlib
import importlib.util
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    try:
        import uso_cbdc_py

        return uso_cbdc_py
    except ImportError:
        pass
    for profile in ("release", "debug"):
        for name in ("libuso_cbdc_py.so", "libuso_cbdc_py.dylib"):
            lib = ROOT / "target" / profile / name
            if lib.exists():
                tmp = pathlib.Path(tempfile.mkdtemp())
                dest = tmp / "uso_cbdc_py.so"
                shutil.copy(lib, dest)
                spec = importlib.util.spec_from_file_location("uso_cbdc_py", dest)
                module = importlib.util.module_from_spec(spec)
                spec.loader.exec_module(module)
                return module
    sys.exit("extension not built; run cargo build -p uso-cbdc-py --features extension-module")


def main():
    m = load()

    key = m.PlateKey(100, seed=5)
    message = hashlib.sha256(b"smoke").digest()
    blinded, factor = key.blind(message)
    sig = key.unblind(key.sign_blinded(blinded), factor)
    assert key.verify(message, sig)
    assert not key.verify(hashlib.sha256(b"other").digest(), sig)

    assert "act1-act2" in m.builtin_names()
    run = m.run_scenario("act1-act2", seed=1)
    assert run.ok, run.summary
    assert run.final_in_flight == 0
    assert run.metrics.startswith("cycle=")

    trust = run.files["trust_roots.txt"]
    exported = [v for k, v in run.files.items() if k.startswith("assets/")]
    assert exported
    report = m.verify_asset(exported[0], trust)
    assert report.passed, report.text
    assert report.finality == "globally final"

    verdict, findings = m.check_compliance(exported[0], max_hops=0)
    assert verdict == "fail" and findings

    clean, text = m.audit(run.files["monitoring.ledger"], run.files["plates.txt"])
    assert clean, text

    lo, hi = m.clopper_pearson(1, 100)
    assert lo < 0.01 < hi

    shipped = (ROOT / "crates" / "core" / "vectors" / "golden.txt").read_text()
    assert m.golden_vectors() == shipped

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
