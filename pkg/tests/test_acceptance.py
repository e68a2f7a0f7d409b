"""Acceptance criteria 1-10, one printed pass/fail line each.

Criteria 1-7 run the closed-form vs Monte Carlo sweep from
``ggsmvif.verification`` at full sample sizes. Criteria 8-10 are end-to-end
checks coded here, including a separately written classic GSM-VIF used as the
regression reference for criterion 9.
"""
import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from ggsmvif import verification as v
from ggsmvif.cli import main
from ggsmvif.infotheory import ChannelParams, vif_aggregate
from ggsmvif.mggd import MggdParams
from ggsmvif.oracle import mc_entropy, mc_fim_trace, mc_mggd_kurtosis, mc_mutual_information
from ggsmvif.pipeline import ScoreOptions, load_image, save_image, score_images
from ggsmvif.synthetic import distort, render_ggsm_image

SEED = 0


def report(capsys, result: v.CriterionResult):
    with capsys.disabled():
        print("\n" + result.line())
        for c in result.failures:
            print(f"    failed: {c.label} value={c.value} reference={c.reference} se={c.std_error}")
        for note in result.notes:
            if not note.endswith("skipped"):
                print(f"    note: {note}")
    assert result.passed, "; ".join(c.label for c in result.failures)


@pytest.fixture(scope="module")
def mi_rows():
    return v.mi_sweep(seed=SEED)


def test_criterion_01_entropy(capsys):
    report(capsys, v.criterion_entropy(seed=SEED))


def test_criterion_02_normalization(capsys):
    report(capsys, v.criterion_normalization())


def test_criterion_03_fisher(capsys):
    report(capsys, v.criterion_fisher(seed=SEED))


def test_criterion_04_kurtosis(capsys):
    report(capsys, v.criterion_kurtosis(seed=SEED))


def test_criterion_05_sum_kurtosis(capsys):
    report(capsys, v.criterion_sum_kurtosis(seed=SEED))


def test_criterion_06_mi_sandwich(capsys, mi_rows):
    report(capsys, v.criterion_mi_sandwich(mi_rows))


def test_criterion_07_mi_approximation(capsys, mi_rows):
    report(capsys, v.criterion_mi_approx(mi_rows))


# (alpha, gain, noise_sd) of the synthetic pairs
SYNTHETIC = [(0.6, 0.7, 0.02), (1.0, 0.5, 0.05), (1.4, 0.9, 0.01), (0.6, 1.0, 0.05), (1.4, 0.3, 0.03)]


def test_criterion_08_vif_sandwich(capsys):
    res = v.CriterionResult(8, "VIF sandwich end-to-end on synthetic GGSM images")
    for i, (alpha, gain, noise_sd) in enumerate(SYNTHETIC):
        ref = render_ggsm_image(384, alpha, seed=v.check_seed(SEED, 8, i))
        dist = distort(ref, gain, noise_sd, seed=v.check_seed(SEED, 8, 100 + i))
        opts = ScoreOptions(alpha=alpha)
        tag = f"alpha={alpha} g={gain} sd={noise_sd}"

        r = score_images(ref, dist, opts).report
        ok = r.vif_lower is not None and r.vif_lower <= r.vif_approx <= r.vif_upper
        res.checks.append(v.Check(f"{tag} lower <= approx <= upper", ok, r.vif_approx))

        ident = score_images(ref, ref, opts)
        res.checks.append(v.Check(f"{tag} identity", abs(ident.report.vif_approx - 1) <= 1e-6, ident.report.vif_approx, 1.0))

        # g = 0 with sigma_v = 0: the distorted image carries no bandpass signal
        flat = score_images(ref, np.full_like(ref, 0.5), opts).report
        res.checks.append(v.Check(f"{tag} g=0 image", flat.vif_approx <= 1e-6, flat.vif_approx, 0.0))

        # g = 0 as a known channel on the fitted reference models
        pairs = [(m, ChannelParams(np.zeros_like(m.z_sq), noise_sd**2, opts.neural_noise_var(m))) for m in ident.models]
        known = vif_aggregate(pairs)
        res.checks.append(v.Check(f"{tag} g=0 known channel", known.vif_approx <= 1e-6, known.vif_approx, 0.0))
    report(capsys, res)


# Classic GSM-VIF written from scratch for criterion 9: explicit shifted-sum
# filtering on numpy 'reflect' padding (whole-sample symmetric), reshaped
# blocks, per-tile loops, and log1p information sums.

KERNEL = np.outer([1, 4, 6, 4, 1], [1, 4, 6, 4, 1]) / 256.0


def _filter(img, kernel):
    padded = np.pad(img, 2, mode="reflect")
    out = np.zeros_like(img)
    h, w = img.shape
    for i in range(5):
        for j in range(5):
            out += kernel[i, j] * padded[i : i + h, j : j + w]
    return out


def _laplacian_bands(img, levels):
    bands = []
    for _ in range(levels):
        low = _filter(img, KERNEL)[::2, ::2]
        up = np.zeros_like(img)
        up[::2, ::2] = low
        bands.append(img - _filter(up, 4.0 * KERNEL))
        img = low
    return bands


def _blocks(band, b=3):
    r, c = band.shape[0] // b, band.shape[1] // b
    crop = band[: r * b, : c * b]
    crop = crop - crop.mean()
    return crop.reshape(r, b, c, b).transpose(0, 2, 1, 3).reshape(r * c, b * b), (r, c)


def classic_vif(ref, dist, levels=4, rel_noise=0.1, tile=4):
    num = den = 0.0
    for rb, db in zip(_laplacian_bands(ref, levels), _laplacian_bands(dist, levels)):
        c, (rows, cols) = _blocks(rb)
        d, _ = _blocks(db)
        n, m = c.shape
        cov = c.T @ c / n
        lam = np.linalg.eigvalsh(cov)
        if lam[0] <= 0 or lam[-1] / lam[0] > 1e12:
            cov = cov + 1e-10 * np.trace(cov) / m * np.eye(m)
            lam = np.linalg.eigvalsh(cov)
        z2 = np.einsum("ij,ij->i", c, np.linalg.solve(cov, c.T).T) / m
        sn2 = rel_noise * np.trace(cov) / m
        floor = 1e-10 * np.mean(c * c)
        g = np.zeros((rows, cols))
        sv2 = np.zeros((rows, cols))
        cg = c.reshape(rows, cols, m)
        dg = d.reshape(rows, cols, m)
        for r0 in range(0, rows, tile):
            for c0 in range(0, cols, tile):
                x = cg[r0 : r0 + tile, c0 : c0 + tile].ravel()
                y = dg[r0 : r0 + tile, c0 : c0 + tile].ravel()
                vx = np.mean(x * x) - np.mean(x) ** 2
                vy = np.mean(y * y) - np.mean(y) ** 2
                cxy = np.mean(x * y) - np.mean(x) * np.mean(y)
                gain = max(cxy / vx, 0.0) if vx >= floor else 0.0
                g[r0 : r0 + tile, c0 : c0 + tile] = gain
                sv2[r0 : r0 + tile, c0 : c0 + tile] = max(vy - gain * cxy, floor)
        g = g.ravel()
        sv2 = sv2.ravel()
        num += 0.5 * np.sum(np.log1p(np.outer(g * g * z2 / (sv2 + sn2), lam)))
        den += 0.5 * np.sum(np.log1p(np.outer(z2 / sn2, lam)))
    return num / den


def test_criterion_09_gaussian_regression(capsys, data_dir):
    res = v.CriterionResult(9, "alpha=1 pipeline matches a separately coded classic GSM-VIF")
    rng = np.random.default_rng(v.check_seed(SEED, 9, 0))
    for name in ("camera.png", "astronaut.ppm", "coffee.png"):
        ref = load_image(data_dir / name)
        distortions = {
            "blur": gaussian_filter(ref, 1.5),
            "noise": 0.7 * ref + 0.03 * rng.standard_normal(ref.shape),
        }
        for kind, dist in distortions.items():
            ours = score_images(ref, dist, ScoreOptions(alpha=1.0)).report.vif_approx
            theirs = classic_vif(ref, dist)
            rel = abs(ours - theirs) / abs(theirs)
            res.checks.append(v.Check(f"{name} {kind} relative error", rel <= 1e-9, ours, theirs))
    report(capsys, res)


def test_criterion_10_determinism(capsys, tmp_path, data_dir):
    res = v.CriterionResult(10, "byte-identical scoring and seed-reproducible oracles")
    ref = data_dir / "camera.png"
    dist = tmp_path / "dist.png"
    save_image(dist, gaussian_filter(load_image(ref), 1.0), bits=16)
    for fmt in ("json", "csv"):
        outs = []
        for k in range(2):
            path = tmp_path / f"run{k}.{fmt}"
            code = main(["score", str(ref), str(dist), "--format", fmt, "--out", str(path)])
            outs.append((code, path.read_bytes()))
        res.checks.append(v.Check(f"score {fmt} byte-identical", outs[0] == outs[1] and outs[0][0] == 0))

    params = MggdParams(0.7, v.random_spd(3, SEED))
    oracles = {
        "mc_entropy": lambda s: mc_entropy(params, 10**5, s),
        "mc_fim_trace": lambda s: mc_fim_trace(params, 10**5, s),
        "mc_mggd_kurtosis": lambda s: mc_mggd_kurtosis(params, 10**5, s),
        "mc_mutual_information": lambda s: mc_mutual_information(MggdParams.isotropic(2, 0.7), 1.0, 0.5, 0.3, 10**5, s),
    }
    for name, fn in oracles.items():
        a, b, other = fn(17), fn(17), fn(18)
        res.checks.append(v.Check(f"{name} reproducible", a == b and a.value != other.value, a.value, b.value))
    report(capsys, res)
