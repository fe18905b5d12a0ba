"""Acceptance criteria, one test each; every test records a PASS/FAIL line.

The end-to-end criteria (7 to 10) share one synthetic dataset and a small
cache of trained runs so that each configuration is trained only once.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from oracles import qp_cvxopt
from shmdetect import bundle as bundle_io
from shmdetect import fdd, model_selection, neural, ocsvm, pipeline, scoring, synth, vae
from shmdetect.cli import main
from shmdetect.config import RunConfig
from shmdetect.signals import SensorRecord, frame_count, window

SEEDS = (0, 1, 2)
REPORT_FILES = ("pod_report.txt", "pod_report.csv", "kl_table.txt", "kl_table.csv",
                "fdd_table.txt", "fdd_table.csv", "report.txt")


# --- 1 ------------------------------------------------------------------------

def test_framing_contract(criterion):
    start = time.perf_counter()
    counts = []
    for n in (24000, 60000, 72000):
        rec = SensorRecord(1, np.zeros(n))
        counts.append((frame_count(n, 128), len(window(rec, 128))))
    elapsed = time.perf_counter() - start
    ok = counts == [(187, 187), (468, 468), (562, 562)] and elapsed < 1.0
    assert criterion(1, ok, f"frames {[c for c, _ in counts]} in {elapsed:.3f}s")


# --- 2 ------------------------------------------------------------------------

PIECEWISE = ("relu", "leaky_relu")


def _kink_pattern(model, x, eps):
    """Which side of zero every piecewise-linear pre-activation sits on."""
    mu, log_var = vae.encode(model, x)
    _, enc = neural.forward(model.encoder, x)
    _, dec = neural.forward(model.decoder, vae.reparameterize(mu, log_var, eps))
    layers = model.encoder.layers + model.decoder.layers
    return [a > 0 for a, layer in zip(enc.pre + dec.pre, layers) if layer.activation in PIECEWISE]


def _same_side(a, b):
    return all(np.array_equal(u, v) for u, v in zip(a, b))


def _sampled_fd_error(model, x, eps, beta, rng, per_array=40, h=1e-5):
    """Relative error of analytic vs central-difference gradients.

    Every parameter array is probed on a random subset of entries, and the
    full gradient is checked along random directions. A probe whose +h and -h
    points put some ReLU pre-activation on different sides of zero straddles a
    kink, where a central difference averages two slopes; such probes are
    skipped and counted.
    """
    _, grads = vae.loss_and_gradients(model, x, eps, beta)
    params = model.parameters()

    def probe():
        return vae.loss_and_gradients(model, x, eps, beta)[0], _kink_pattern(model, x, eps)

    worst, skipped = 0.0, 0
    for p, g in zip(params, grads):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        idx = rng.choice(flat.size, size=min(per_array, flat.size), replace=False)
        kept, numeric = [], []
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            up, up_side = probe()
            flat[i] = orig - h
            down, down_side = probe()
            flat[i] = orig
            if not _same_side(up_side, down_side):
                skipped += 1
                continue
            kept.append(i)
            numeric.append((up - down) / (2 * h))
        if kept:
            worst = max(worst, neural.relative_error([gflat[kept]], [np.array(numeric)]))
    for _ in range(3):
        dirs = [rng.standard_normal(p.shape) for p in params]
        norm = math.sqrt(sum(float(np.sum(d * d)) for d in dirs))
        for p, d in zip(params, dirs):
            p += h * d / norm
        up, up_side = probe()
        for p, d in zip(params, dirs):
            p -= 2 * h * d / norm
        down, down_side = probe()
        for p, d in zip(params, dirs):
            p += h * d / norm
        if not _same_side(up_side, down_side):
            skipped += 1
            continue
        numeric = (up - down) / (2 * h)
        analytic = sum(float(np.sum(g * d)) for g, d in zip(grads, dirs)) / norm
        worst = max(worst, abs(numeric - analytic) / max(abs(numeric), abs(analytic)))
    return worst, skipped


def test_elbo_gradient_matches_finite_differences(criterion):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    errors, skipped = [], 0
    for trial in range(20):
        cfg = model_selection.VAE_SPACE.sample(rng)
        arch = vae.architecture_from(cfg)
        model = vae.build_model(128, arch, seed=trial)
        x = rng.uniform(size=(4, 128))
        eps = rng.standard_normal((4, arch.latent_dim))
        err, skip = _sampled_fd_error(model, x, eps, beta=1.0, rng=rng)
        errors.append(err)
        skipped += skip
    elapsed = time.perf_counter() - start
    ok = max(errors) < 1e-5 and elapsed < 30
    assert criterion(2, ok, f"max relative error {max(errors):.2e} over 20 configurations "
                            f"in {elapsed:.1f}s, {skipped} probe(s) straddling a ReLU kink skipped")


# --- 3 ------------------------------------------------------------------------

def test_kl_closed_forms(criterion):
    cases = [
        (vae.kl_to_standard_normal(np.zeros(3), np.zeros(3)), 0.0),
        (vae.kl_to_standard_normal(np.array([1.0]), np.array([0.0])), 0.5),
        (vae.kl_to_standard_normal(np.array([0.0]), np.array([math.log(2.0)])),
         0.5 * (2 - math.log(2) - 1)),
    ]
    one = lambda m, v: scoring.LatentSummary(np.array([m]), np.array([v]))  # noqa: E731
    same = scoring.LatentSummary(np.array([0.2, -0.4]), np.array([0.7, 1.3]))
    cases += [
        (scoring.kl_between(same, same), 0.0),
        (scoring.kl_between(one(1.0, 1.0), one(0.0, 1.0)), 0.5),
        (scoring.kl_between(one(0.0, 2.0), one(0.0, 1.0)), 0.5 * (2 - math.log(2) - 1)),
    ]
    worst = max(abs(got - want) for got, want in cases)
    assert criterion(3, worst < 1e-12, f"max abs deviation {worst:.1e} over {len(cases)} cases")


# --- 4 ------------------------------------------------------------------------

def _kkt_residual(model, X):
    a = ocsvm.full_alphas(model)
    d = ocsvm.decision(model, X)
    u, tiny = model.upper_bound, 1e-9 * model.upper_bound
    res = np.where(a <= tiny, np.maximum(-d, 0),
                   np.where(a >= u - tiny, np.maximum(d, 0), np.abs(d)))
    return float(res.max())


def test_ocsvm_matches_qp_oracle(criterion):
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    gaps, kkts = [], []
    for _ in range(50):
        n = int(rng.integers(2, 13))
        X = rng.normal(size=(n, int(rng.integers(1, 4))))
        nu = float(rng.uniform(0.05, 1.0))
        spec = ocsvm.KernelSpec(str(rng.choice(["rbf", "linear", "poly"])))
        m = ocsvm.fit(X, nu, spec)
        Q = ocsvm.kernel_matrix(m.kernel, X, X)
        ref = qp_cvxopt(Q, m.upper_bound)
        gaps.append(abs(ocsvm.dual_objective(ocsvm.full_alphas(m), Q)
                        - ocsvm.dual_objective(ref, Q)))
        kkts.append(_kkt_residual(m, X))
    elapsed = time.perf_counter() - start
    ok = max(gaps) < 1e-6 and max(kkts) < 1e-6 and elapsed < 60
    assert criterion(4, ok, f"max objective gap {max(gaps):.1e}, max KKT residual "
                            f"{max(kkts):.1e}, {elapsed:.1f}s")


# --- 5 ------------------------------------------------------------------------

def test_nu_property(criterion):
    n = 200
    worst_out, worst_sv = -1.0, -1.0
    for seed in range(5):
        X = np.random.default_rng(100 + seed).standard_normal((n, 2))
        for nu in (0.05, 0.1, 0.25, 0.5):
            m = ocsvm.fit(X, nu)
            out_frac = float(np.mean(ocsvm.decision(m, X) < 0))
            sv_frac = m.alphas.size / n
            worst_out = max(worst_out, out_frac - (nu + 1 / n))
            worst_sv = max(worst_sv, (nu - 1 / n) - sv_frac)
    ok = worst_out <= 1e-12 and worst_sv <= 1e-12
    assert criterion(5, ok, f"outlier excess {worst_out:+.4f}, SV shortfall {worst_sv:+.4f} "
                            "(both must be <= 0)")


# --- 6 ------------------------------------------------------------------------

def test_fdd_against_analytic_modes(criterion):
    start = time.perf_counter()
    model = synth.calibrated_model()
    spec = synth.ExcitationSpec(duration_s=120.0, sampling_rate_hz=200.0, band_low_hz=5.0,
                                band_high_hz=50.0, seed=11)
    exact = [f for f, _ in synth.analytic_modes(model)][:2]
    intact = fdd.identify_modes(synth.simulate(model, synth.DamageScenario(1, (1.0,) * 4), spec))
    halved = fdd.identify_modes(synth.simulate(model, synth.DamageScenario(2, (0.5,) * 4), spec))
    errors = [abs(f - e) / e for f, e in zip(intact.frequencies[:2], exact)]
    shifts = fdd.frequency_shift_table(intact.frequencies[:2], halved.frequencies[:2])
    elapsed = time.perf_counter() - start
    ok = (len(errors) == 2 and max(errors) < 0.02 and None not in shifts
          and all(abs(s + 29.29) <= 1.0 for s in shifts) and elapsed < 30)
    assert criterion(6, ok, f"relative errors {[f'{e:.4f}' for e in errors]}, shifts "
                            f"{[f'{s:.2f}' for s in shifts]} %, {elapsed:.1f}s")


# --- end-to-end runs ------------------------------------------------------------

class Runs:
    """Trains and scores each (seed, mode) once on one shared dataset."""

    def __init__(self, root: Path):
        self.root = root
        self.data = root / "data"
        pipeline.generate(RunConfig(), self.data)
        self._cache = {}

    def get(self, seed: int, mode: str = "variational"):
        key = (seed, mode)
        if key not in self._cache:
            config = RunConfig(seed=seed, vae_mode=mode)
            out = self.root / f"run_{mode}_{seed}"
            start = time.perf_counter()
            model = pipeline.train(config, self.data)
            report, kl = pipeline.score(model, self.data, out)
            elapsed = time.perf_counter() - start
            self._cache[key] = (model, report, kl, out, elapsed)
        return self._cache[key]


@pytest.fixture(scope="session")
def runs(tmp_path_factory):
    return Runs(tmp_path_factory.mktemp("acceptance"))


def _severity(runs):
    manifest = pipeline.read_manifest(runs.data)
    return {s["case"]: s["severity"] for s in manifest["scenarios"]}


def test_table3_pattern(criterion, runs):
    _, report, _, _, elapsed = runs.get(0)
    severity = _severity(runs)
    damaged = [c for c in report.cases if c != 1]
    severe = max(damaged, key=lambda c: severity[c])
    mild = min(damaged, key=lambda c: severity[c])
    case1 = report.summary(1).mean
    top, low = report.summary(severe).mean, report.summary(mild).mean
    print(report.to_text())
    ok = case1 < 15 and top > 85 and top > low and elapsed < 600
    assert criterion(7, ok, f"Case 1 holdout {case1:.2f}%, most severe (case {severe}) "
                            f"{top:.2f}%, mildest (case {mild}) {low:.2f}%, {elapsed:.0f}s")


def test_table5_kl_rank_correlation(criterion, runs):
    _, _, kl, _, _ = runs.get(0)
    severity = _severity(runs)
    cases = kl.cases
    rho = stats.spearmanr([kl.average(c) for c in cases], [severity[c] for c in cases])[0]
    print(kl.to_text())
    assert criterion(8, rho >= 0.8, f"Spearman {rho:.3f} over {len(cases)} damaged scenarios")


def test_autoencoder_baseline_direction(criterion, runs):
    vae_pod = [runs.get(s)[1].summary(1).mean for s in SEEDS]
    ae_pod = [runs.get(s, "deterministic")[1].summary(1).mean for s in SEEDS]
    ok = np.median(ae_pod) >= np.median(vae_pod)
    assert criterion(9, ok, f"Case 1 holdout PoD_avg median AE {np.median(ae_pod):.2f} vs "
                            f"VAE {np.median(vae_pod):.2f} (AE {ae_pod}, VAE {vae_pod})")


def test_determinism_and_persistence(criterion, runs, tmp_path):
    model, report, kl, out_a, _ = runs.get(0)
    pipeline.run_fdd(model.config, runs.data, out_a)
    pipeline.assemble_report(out_a)
    saved = bundle_io.save(model, out_a / "model.json")

    # second run through the command line, from a freshly generated dataset
    data_b, out_b, bundle_b = tmp_path / "data", tmp_path / "out", tmp_path / "model.json"
    assert main(["generate", "--out", str(data_b)]) == 0
    assert main(["train", "--data", str(data_b), "--bundle", str(bundle_b)]) == 0
    assert main(["score", "--bundle", str(bundle_b), "--data", str(data_b),
                 "--out", str(out_b)]) == 0
    assert main(["fdd", "--data", str(data_b), "--out", str(out_b)]) == 0
    assert main(["report", "--out", str(out_b)]) == 0

    differing = [name for name in REPORT_FILES
                 if (out_a / name).read_bytes() != (out_b / name).read_bytes()]
    differing += [p.name for p in runs.data.iterdir()
                  if p.read_bytes() != (data_b / p.name).read_bytes()]
    if saved.read_bytes() != bundle_b.read_bytes():
        differing.append("model.json")

    reloaded, reloaded_kl = pipeline.score(bundle_io.load(saved), runs.data)
    same_pod = reloaded.entries == report.entries and all(
        reloaded.value(s, c) == report.value(s, c) for s in report.sensors for c in report.cases)
    same_kl = reloaded_kl.values == kl.values
    ok = not differing and same_pod and same_kl
    assert criterion(10, ok, f"differing files {differing or 'none'}; reloaded bundle "
                             f"reproduces PoD {same_pod}, KL {same_kl}")
