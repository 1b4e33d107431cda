"""Monte-Carlo harness: multi-user uplink sounding with inter-cell
contamination, per-user estimation quality, and TDD downlink beamforming.

Two channel-model families are supported. "circulant" (the default) draws
the window-stationary process whose covariance is the circulant picture the
large-P analysis works in, and lets the estimator use exactly that model, so
desk-scale runs converge to the asymptotic formulas. "exact" draws samples
with the exact Toeplitz statistics of the underlying continuous-time process;
its window-averaged error converges to the same limit but visibly slower,
which is itself one of the toolkit's cross-checks.
"""

import json
import logging
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from types import SimpleNamespace

import numpy as np
from scipy.linalg import cho_factor, cho_solve, circulant

from . import estimation, pilots
from .fading import DopplerSpectrum, build_covariance, complex_normal

log = logging.getLogger(__name__)

CSV_SCHEMA = "psdalign.csv.v1"
MANIFEST_SCHEMA = "psdalign.manifest.v1"

# staggered ladder clearing the default contamination band: 3/8 + k/36
PRESET_SHIFT_GRID = tuple(3.0 / 8.0 + (k + 1) / 36.0 for k in range(8))


@dataclass(frozen=True)
class ExperimentConfig:
    """Sounding-experiment description; defaults follow the shipped scenario.

    Frequencies: the channel is sampled once every `sampling_divisor` symbols,
    so f_s = 1/(sampling_divisor * T_s); with T_s = 66.67 us that is 5 kHz and
    the normalized Doppler is F = doppler_hz / f_s.
    """

    symbol_duration_s: float = 66.67e-6
    sampling_divisor: int = 3
    doppler_hz: float = 10.0
    users: int = 8
    user_power_db: float = 0.0
    pilot_snr_db: float = 0.0
    scheme: str = "psd_align"  # "psd_align" | "hadamard"
    shifts: object = "preset"  # "preset" | "auto" | sequence of cycles (tau/P)
    contamination_band: tuple | None = (-0.375, 0.375)
    contamination_inr_db: float | None = 0.0
    observation_length: int = 4096
    sweep_lengths: tuple = (512, 1024, 2048, 4096)
    antennas: int = 16
    trials: int = 200
    dl_lag: int = 1
    dl_snr_db: float | None = None
    perfect_csi: bool = False
    channel_model: str = "circulant"  # "circulant" | "exact"
    seed: int = 20260810
    jobs: int = 1
    tolerance_scale: float = 1.0

    def __post_init__(self):
        if self.users < 1:
            raise ValueError("need at least one user")
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if self.antennas < 1:
            raise ValueError("need at least one antenna")
        if self.observation_length < 2:
            raise ValueError("observation length must be >= 2")
        if self.scheme not in ("psd_align", "hadamard"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.channel_model not in ("circulant", "exact"):
            raise ValueError(f"unknown channel model {self.channel_model!r}")
        if self.max_doppler > 0.5:
            raise ValueError(
                f"normalized Doppler {self.max_doppler:.4f} exceeds 1/2; "
                "raise the sampling frequency"
            )
        if isinstance(self.shifts, str):
            if self.shifts not in ("preset", "auto"):
                raise ValueError("shifts must be 'preset', 'auto', or a sequence of cycles")
        elif len(self.shifts) != self.users:
            raise ValueError("per-user shift list length must equal the user count")
        if self.contamination_band is not None:
            lo, hi = self.contamination_band
            if not (-0.5 <= lo < hi <= 0.5):
                raise ValueError("contamination band must lie in (-1/2, 1/2]")

    @property
    def sampling_frequency_hz(self):
        return 1.0 / (self.sampling_divisor * self.symbol_duration_s)

    @property
    def max_doppler(self):
        return self.doppler_hz / self.sampling_frequency_hz

    @property
    def user_power(self):
        return 10.0 ** (self.user_power_db / 10.0)

    @property
    def noise_var(self):
        return self.user_power / 10.0 ** (self.pilot_snr_db / 10.0)

    @property
    def contamination_power(self):
        if self.contamination_band is None or self.contamination_inr_db is None:
            return 0.0
        return self.user_power * 10.0 ** (self.contamination_inr_db / 10.0)

    def to_dict(self):
        d = asdict(self)
        for key in ("shifts", "sweep_lengths", "contamination_band"):
            if isinstance(d[key], tuple):
                d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("sweep_lengths", "contamination_band"):
            if key in d and isinstance(d[key], list):
                d[key] = tuple(d[key])
        if isinstance(d.get("shifts"), list):
            d["shifts"] = tuple(d["shifts"])
        return cls(**d)


@dataclass(frozen=True)
class RunResult:
    """Per-user outcomes of one (scheme, P) run plus the replay seeds."""

    scheme: str
    P: int
    nmse_empirical: tuple
    nmse_halfwidth: tuple
    nmse_analytic: float
    nmse_model: float
    gain_empirical_db: tuple
    gain_halfwidth_db: tuple
    gain_analytic_db: float | None
    dl_se_per_user: tuple | None
    dl_se_sum: float | None
    dl_se_halfwidth: float | None
    rx_power_per_antenna: float
    trial_seeds: tuple

    @property
    def nmse_mean(self):
        return float(np.mean(self.nmse_empirical))


def user_shift_cycles(config, P):
    """Per-user cyclic shifts as fractions of the window (tau_k / P)."""
    if config.scheme == "hadamard":
        return None
    if isinstance(config.shifts, str):
        if config.shifts == "preset":
            grid = [PRESET_SHIFT_GRID[k % 8] + (k // 8) / 36.0 for k in range(config.users)]
            return tuple(g % 1.0 for g in grid)
        bands = [config.contamination_band] if config.contamination_band else []
        plan = pilots.plan_alignment(
            [config.max_doppler] * config.users, bands, P, guard=0.0
        )
        return tuple(s / P for s in plan.shifts)
    return tuple(float(s) % 1.0 for s in config.shifts)


def alignment_plan(config, P=None):
    """The alignment plan implied by the configuration (PSD-aligned scheme)."""
    P = P or config.observation_length
    cycles = user_shift_cycles(config, P)
    if cycles is None:
        raise ValueError("the conventional scheme has no alignment plan")
    bands = (config.contamination_band,) if config.contamination_band else ()
    plan = pilots.AlignmentPlan(
        dopplers=(config.max_doppler,) * config.users,
        shifts=tuple(c * P for c in cycles),
        P=P,
        forbidden=bands,
        guard=0.0,
    )
    problems = plan.validate()
    if problems:
        raise pilots.PlanInfeasibleError(
            "alignment plan violates its invariants:\n  " + "\n  ".join(problems),
            width_deficit=float("nan"),
        )
    return plan


def _model_eigenvalues(spectrum, P):
    """Clamped circulant eigenvalues renormalized to the exact process power."""
    cov = build_covariance(spectrum, P)
    lam = cov.eigenvalues.copy()
    total = lam.sum()
    if total > 0:
        lam *= P * spectrum.power / total
    return lam


def _setup(config, P):
    """Precompute everything shared by all trials of one (scheme, P) run."""
    s = SimpleNamespace()
    s.scheme = config.scheme
    s.K = config.users
    s.rho = config.user_power
    s.sigma2 = config.noise_var
    s.F = config.max_doppler
    s.model = config.channel_model
    s.dl_lag = config.dl_lag
    s.M = config.antennas
    s.perfect_csi = config.perfect_csi
    rho_dl = config.user_power
    s.sigma2_dl = (
        rho_dl / 10.0 ** (config.dl_snr_db / 10.0) if config.dl_snr_db is not None else config.noise_var
    )
    s.rho_dl = rho_dl

    if config.scheme == "hadamard":
        s.P = config.users
        s.pilots = pilots.hadamard_pilots(config.users)
    else:
        s.P = P
        cycles = user_shift_cycles(config, P)
        s.pilots = [pilots.fft_pilot((c * P) % P, P) for c in cycles]

    spectrum = DopplerSpectrum.clarke(s.F)
    cont_spectrum = None
    if config.contamination_power > 0:
        lo, hi = config.contamination_band
        cont_spectrum = DopplerSpectrum.flat_band(lo, hi, power=config.contamination_power)

    n_dl = s.P - 1 + config.dl_lag

    if s.model == "circulant":
        s.lam_user = _model_eigenvalues(spectrum, s.P)
        s.lam_cont = _model_eigenvalues(cont_spectrum, s.P) if cont_spectrum else None
        C = circulant(np.fft.ifft(s.lam_user))
        A = s.sigma2 * np.eye(s.P, dtype=complex)
        for pilot in s.pilots:
            x = pilot.values
            A += s.rho * (C * np.outer(x, np.conj(x)))
        if s.lam_cont is not None:
            A += circulant(np.fft.ifft(s.lam_cont))
        s.factor = cho_factor(A, lower=True)
        # DL phase row of the inverse unitary DFT at the downlink slot
        s.dl_phase = np.exp(2j * np.pi * np.arange(s.P) * n_dl / s.P) / math.sqrt(s.P)
        s.nmse_model = estimation.mse_from_eigenvalues(s.lam_user, s.rho, s.sigma2)
    else:
        cov = build_covariance(spectrum, s.P)
        s.R = cov.toeplitz().astype(complex)
        xi_u, amp_u = spectrum.synthesis_nodes(max_lag=n_dl)
        s.synth_user = (np.exp(2j * np.pi * np.outer(np.arange(n_dl + 1), xi_u)), amp_u)
        if cont_spectrum is not None:
            xi_c, amp_c = cont_spectrum.synthesis_nodes(max_lag=s.P - 1)
            s.synth_cont = (np.exp(2j * np.pi * np.outer(np.arange(s.P), xi_c)), amp_c)
        else:
            s.synth_cont = None
        A = s.sigma2 * np.eye(s.P, dtype=complex)
        for pilot in s.pilots:
            x = pilot.values
            A += s.rho * (s.R * np.outer(x, np.conj(x)))
        if cont_spectrum is not None:
            s.R_cont = build_covariance(cont_spectrum, s.P).toeplitz().astype(complex)
            A += s.R_cont
        s.factor = cho_factor(A, lower=True)
        _, s.nmse_model = estimation.error_covariance(
            estimation.UplinkScene(
                users=(estimation.UplinkUser(s.rho, s.pilots[0], cov),),
                noise_var=s.sigma2,
            ),
            0,
        )

    s.nmse_analytic = estimation.small_alpha_mse(s.F, s.rho / s.sigma2)
    s.gain_analytic_db = estimation.processing_gain_db(s.F, s.rho / s.sigma2)
    s.pilot_matrix = np.stack([p.values for p in s.pilots])  # (K, P)
    return s


def _apply_user_covariance(s, W):
    """Multiply the user-channel model covariance onto a (P, M) block."""
    if s.model == "circulant":
        return np.fft.ifft(s.lam_user[:, None] * np.fft.fft(W, axis=0), axis=0)
    return s.R @ W


def _trial(s, rng, include_dl):
    P, M, K = s.P, s.M, s.K
    # fixed draw order: users, then contamination, then noise
    h_all = []
    h_dl = []
    for _ in range(K):
        if s.model == "circulant":
            g = complex_normal(rng, (P, M))
            coeff = np.sqrt(s.lam_user)[:, None] * g
            h_all.append(math.sqrt(P) * np.fft.ifft(coeff, axis=0))
            if include_dl:
                h_dl.append(s.dl_phase @ coeff)
        else:
            phases, amp = s.synth_user
            g = complex_normal(rng, (amp.size, M))
            block = phases @ (amp[:, None] * g)
            h_all.append(block[:P])
            if include_dl:
                h_dl.append(block[-1])
    y = np.zeros((P, M), dtype=complex)
    for k in range(K):
        y += math.sqrt(s.rho) * s.pilot_matrix[k][:, None] * h_all[k]
    if s.model == "circulant":
        if s.lam_cont is not None:
            g = complex_normal(rng, (P, M))
            y += math.sqrt(P) * np.fft.ifft(np.sqrt(s.lam_cont)[:, None] * g, axis=0)
    elif s.synth_cont is not None:
        phases, amp = s.synth_cont
        g = complex_normal(rng, (amp.size, M))
        y += phases @ (amp[:, None] * g)
    y += math.sqrt(s.sigma2) * complex_normal(rng, (P, M))

    rx_power = float(np.mean(np.abs(y) ** 2))

    Z = cho_solve(s.factor, y)
    nmse = np.empty(K)
    estimates_dl = []
    for k in range(K):
        W = np.conj(s.pilot_matrix[k])[:, None] * Z
        h_hat = math.sqrt(s.rho) * _apply_user_covariance(s, W)
        err = h_all[k] - h_hat
        # per-element error power == ||err||^2 / (P * r0) per antenna with r0 = 1
        nmse[k] = float(np.mean(np.abs(err) ** 2))
        if include_dl:
            estimates_dl.append(h_all[k][-1] if s.perfect_csi else h_hat[-1])

    out = {"nmse": nmse, "rx_power": rx_power}
    if include_dl:
        se = np.zeros(K)
        beams = []
        active = []
        for k in range(K):
            norm = np.linalg.norm(estimates_dl[k])
            if norm == 0.0:
                log.warning("zero-norm estimate for user %d; skipping its beam", k)
                beams.append(None)
                continue
            beams.append(estimates_dl[k] / norm)
            active.append(k)
        for k in active:
            truth = h_dl[k]
            sig = s.rho_dl * abs(np.vdot(truth, beams[k])) ** 2
            interf = sum(
                s.rho_dl * abs(np.vdot(truth, beams[g])) ** 2 for g in active if g != k
            )
            se[k] = math.log2(1.0 + sig / (interf + s.sigma2_dl))
        out["se"] = se
    return out


def _halfwidth(samples, axis=0):
    samples = np.asarray(samples)
    n = samples.shape[axis]
    if n < 2:
        return np.zeros(np.delete(samples.shape, axis))
    return 1.96 * samples.std(axis=axis, ddof=1) / math.sqrt(n)


def run_experiment(config, P=None, include_dl=True):
    """Run one (scheme, P) experiment; returns a RunResult.

    Trials use independent, replayable random streams seeded by
    (config.seed, scheme, P, trial). With jobs > 1 the trials run on a thread
    pool; the reduction order is fixed, so results do not depend on `jobs`.
    """
    P = int(P or config.observation_length)
    s = _setup(config, P)
    scheme_tag = 0 if config.scheme == "psd_align" else 1
    seeds = [(config.seed, scheme_tag, s.P, t) for t in range(config.trials)]

    def one(t):
        return _trial(s, np.random.default_rng(list(seeds[t])), include_dl)

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            outs = list(pool.map(one, range(config.trials)))
    else:
        outs = [one(t) for t in range(config.trials)]

    nmse_trials = np.stack([o["nmse"] for o in outs])
    nmse_mean = nmse_trials.mean(axis=0)
    nmse_hw = _halfwidth(nmse_trials)
    snr = s.rho / s.sigma2
    gain_trials = (1.0 / nmse_trials - 1.0) / snr
    gain_db = 10.0 * np.log10(gain_trials.mean(axis=0))
    gain_hw_db = 10.0 / math.log(10.0) * _halfwidth(gain_trials) / gain_trials.mean(axis=0)

    if include_dl:
        se_trials = np.stack([o["se"] for o in outs])
        se_user = se_trials.mean(axis=0)
        se_sum_trials = se_trials.sum(axis=1)
        dl_se_sum = float(se_sum_trials.mean())
        dl_se_hw = float(_halfwidth(se_sum_trials))
        dl_per_user = tuple(float(v) for v in se_user)
    else:
        dl_per_user = None
        dl_se_sum = None
        dl_se_hw = None

    return RunResult(
        scheme=config.scheme,
        P=s.P,
        nmse_empirical=tuple(float(v) for v in nmse_mean),
        nmse_halfwidth=tuple(float(v) for v in nmse_hw),
        nmse_analytic=float(s.nmse_analytic),
        nmse_model=float(s.nmse_model),
        gain_empirical_db=tuple(float(v) for v in gain_db),
        gain_halfwidth_db=tuple(float(v) for v in gain_hw_db),
        gain_analytic_db=s.gain_analytic_db,
        dl_se_per_user=dl_per_user,
        dl_se_sum=dl_se_sum,
        dl_se_halfwidth=dl_se_hw,
        rx_power_per_antenna=float(np.mean([o["rx_power"] for o in outs])),
        trial_seeds=tuple(seeds),
    )


def run_uplink(config, P=None):
    """Uplink sounding run: per-user nMSE and processing gain."""
    return run_experiment(config, P=P, include_dl=False)


def _shifted_psd_samples(spectrum, P, shift_cycles):
    """Grid samples of a spectrum translated on the frequency circle."""
    from .estimation import _wrap
    from .fading import grid_frequencies

    xi = _wrap(grid_frequencies(P) - shift_cycles)
    vals = np.atleast_1d(spectrum.psd(xi))
    # a singular band edge landing exactly on a bin carries no mass
    return np.where(np.isfinite(vals), vals, 0.0)


def user_reports(config, result=None, P=None):
    """Per-user EstimationReport tying together every MSE route for one run.

    Finite-P values use the grid-sampled spectra (the eigenvalue picture of
    the estimator); the asymptotic value integrates the same configuration.
    Empirical fields are filled from `result` when provided.
    """
    P = result.P if result is not None else int(P or config.observation_length)
    rho, sigma2, F = config.user_power, config.noise_var, config.max_doppler
    snr = rho / sigma2
    spectrum = DopplerSpectrum.clarke(F)
    lam = spectrum.sample_eigenvalues(P)
    cycles = user_shift_cycles(config, P)
    if cycles is None:
        cycles = (0.0,) * config.users
    cont = None
    if config.contamination_power > 0:
        lo, hi = config.contamination_band
        cont = DopplerSpectrum.flat_band(lo, hi, power=config.contamination_power)
    alpha = math.pi * F / snr
    reports = []
    for k in range(config.users):
        interference = np.zeros(P)
        interferers = []
        for g in range(config.users):
            if g == k:
                continue
            delta = cycles[g] - cycles[k]
            interference += rho * _shifted_psd_samples(spectrum, P, delta)
            interferers.append((spectrum, delta, rho))
        if cont is not None:
            interference += _shifted_psd_samples(cont, P, -cycles[k])
            interferers.append((cont, -cycles[k], 1.0))
        reports.append(
            estimation.EstimationReport(
                finite_p_mse=estimation.mse_from_eigenvalues(lam, rho, sigma2, interference),
                interference_free_mse=estimation.mse_from_eigenvalues(lam, rho, sigma2),
                asymptotic_mse=estimation.asymptotic_mse(spectrum, rho, sigma2, interferers),
                closed_form_mse=estimation.clarke_closed_form(alpha),
                small_alpha_mse=estimation.small_alpha_mse(F, snr),
                processing_gain_db=estimation.processing_gain_db(F, snr),
                empirical_nmse=result.nmse_empirical[k] if result is not None else None,
                empirical_halfwidth=result.nmse_halfwidth[k] if result is not None else None,
            )
        )
    return reports


def run_downlink(config, P=None):
    """Uplink sounding plus TDD downlink matched-filter beamforming."""
    return run_experiment(config, P=P, include_dl=True)


# ---------------------------------------------------------------------------
# file outputs


def atomic_write_text(path, text):
    """Write text to path atomically (temp file in the same directory + rename)."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _fmt(x):
    if x is None:
        return "nan"
    return format(float(x), ".12g")


def write_mse_csv(results, path):
    lines = [f"# schema: {CSV_SCHEMA}", "scheme,P,user,empirical,analytic,ci_halfwidth"]
    for r in results:
        for k, (emp, hw) in enumerate(zip(r.nmse_empirical, r.nmse_halfwidth)):
            lines.append(f"{r.scheme},{r.P},{k},{_fmt(emp)},{_fmt(r.nmse_analytic)},{_fmt(hw)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_gain_csv(results, path):
    lines = [f"# schema: {CSV_SCHEMA}", "scheme,P,user,empirical_db,analytic_db,ci_halfwidth_db"]
    for r in results:
        for k, (emp, hw) in enumerate(zip(r.gain_empirical_db, r.gain_halfwidth_db)):
            lines.append(
                f"{r.scheme},{r.P},{k},{_fmt(emp)},{_fmt(r.gain_analytic_db)},{_fmt(hw)}"
            )
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_dlse_csv(results, path):
    lines = [f"# schema: {CSV_SCHEMA}", "scheme,P,user,empirical,analytic,ci_halfwidth"]
    for r in results:
        if r.dl_se_per_user is None:
            continue
        for k, se in enumerate(r.dl_se_per_user):
            lines.append(f"{r.scheme},{r.P},{k},{_fmt(se)},nan,{_fmt(r.dl_se_halfwidth)}")
        lines.append(f"{r.scheme},{r.P},sum,{_fmt(r.dl_se_sum)},nan,{_fmt(r.dl_se_halfwidth)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_aggregate_dat(results, path):
    """Gnuplot-friendly aggregate: one row per (P), one column block per scheme."""
    by_p = {}
    schemes = []
    for r in results:
        if r.scheme not in schemes:
            schemes.append(r.scheme)
        entry = by_p.setdefault(r.P, {})
        entry[r.scheme] = r
    cols = ["P"]
    for sch in schemes:
        cols += [f"{sch}_nmse", f"{sch}_gain_db", f"{sch}_dl_se_sum"]
    lines = [f"# schema: {CSV_SCHEMA}", "# " + " ".join(cols)]
    for P in sorted(by_p):
        row = [str(P)]
        for sch in schemes:
            r = by_p[P].get(sch)
            if r is None:
                row += ["nan", "nan", "nan"]
            else:
                row += [
                    _fmt(np.mean(r.nmse_empirical)),
                    _fmt(np.mean(r.gain_empirical_db)),
                    _fmt(r.dl_se_sum),
                ]
        lines.append(" ".join(row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_manifest(config, results, path):
    doc = {
        "schema": MANIFEST_SCHEMA,
        "config": config.to_dict(),
        "runs": [
            {
                "scheme": r.scheme,
                "P": r.P,
                "trial_seeds": [list(t) for t in r.trial_seeds],
            }
            for r in results
        ],
    }
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
