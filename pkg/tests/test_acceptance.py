"""End-to-end acceptance checks, one test per advertised guarantee.

Every numeric claim the package makes is exercised here at its stated
tolerance, and the experiment-style claims run on fixed reference seed
suites so the whole file is deterministic.  Naive reference
implementations (plain double loops, central finite differences) appear
before the tests that use them, so each fast code path is judged against
an independently written oracle.  Tests with a wall-clock budget assert
it with time.perf_counter.
"""

import math
import time

import numpy as np

from ilens.distributions import (
    argmax_order,
    delta_distribution,
    mean_distribution,
    order_distribution,
)
from ilens.extraction import (
    ExtractConfig,
    InteractionSet,
    extract,
    matching_error,
    mean_interactions,
)
from ilens.generalization import orderwise_jaccard, trend_statistic
from ilens.model_zoo import (
    SyntheticModel,
    TrainConfig,
    even_groups,
    forward,
    generate_dataset,
    gaussian_perturb,
    init_net,
    logistic_loss,
    masked_table,
    random_synthetic_model,
    train,
)
from ilens.parametric import (
    DisentangleResult,
    FitGrid,
    SpindleParams,
    build_m_matrix,
    decay_predict,
    default_fit_grid,
    disentangle,
    fit_spindle,
    spindle_curve,
)
from ilens.subset_lattice import (
    as_lattice_vector,
    mask_orders,
    mobius_and,
    mobius_or,
    reconstruct_all,
    zeta_and,
)


# ---------------------------------------------------------------------------
# naive oracles


def naive_mobius_and(u: np.ndarray) -> np.ndarray:
    """Alternating subset sums written as the plainest possible double loop."""
    size = u.size
    out = np.zeros(size)
    for s in range(size):
        total = 0.0
        for t in range(size):
            if t & s == t:
                total += (-1.0) ** bin(s ^ t).count("1") * u[t]
        out[s] = total
    return out


def naive_zeta_and(i: np.ndarray) -> np.ndarray:
    size = i.size
    out = np.zeros(size)
    for t in range(size):
        total = 0.0
        for s in range(size):
            if s & t == s:
                total += i[s]
        out[t] = total
    return out


def naive_mobius_or(u: np.ndarray) -> np.ndarray:
    """Alternating sums over complements, again as literal loops."""
    size = u.size
    full = size - 1
    out = np.zeros(size)
    for s in range(1, size):
        total = 0.0
        for t in range(size):
            if t & s == t:
                total -= (-1.0) ** bin(s ^ t).count("1") * u[full ^ t]
        out[s] = total
    return out


def naive_or_reconstruction(bias: float, i_or: np.ndarray) -> np.ndarray:
    """v(T) = v(empty) + sum of OR effects whose subset touches T."""
    size = i_or.size
    out = np.zeros(size)
    for t in range(size):
        total = bias
        for s in range(1, size):
            if s & t:
                total += i_or[s]
        out[t] = total
    return out


def fd_logit_gradient(net, x, step=1e-5):
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for j in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi[j] += step
        lo[j] -= step
        grad[j] = (forward(net, hi) - forward(net, lo)) / (2 * step)
    return grad


def fd_loss_gradients(net, features, labels, step=1e-5):
    """Central differences of the mean logistic loss, parameter by parameter."""
    from ilens.model_zoo import TinyNet

    def rebuild(weights, biases):
        return TinyNet(
            layer_sizes=net.layer_sizes,
            weights=tuple(weights),
            biases=tuple(biases),
            feature_baseline=net.feature_baseline,
        )

    grads_w, grads_b = [], []
    for layer in range(len(net.weights)):
        gw = np.zeros_like(net.weights[layer])
        for idx in np.ndindex(*gw.shape):
            for sign, store in ((1.0, "hi"), (-1.0, "lo")):
                ws = [w.copy() for w in net.weights]
                ws[layer][idx] += sign * step
                val = logistic_loss(rebuild(ws, net.biases), features, labels)
                if store == "hi":
                    hi = val
                else:
                    lo = val
            gw[idx] = (hi - lo) / (2 * step)
        grads_w.append(gw)
        gb = np.zeros_like(net.biases[layer])
        for idx in np.ndindex(*gb.shape):
            for sign, store in ((1.0, "hi"), (-1.0, "lo")):
                bs = [b.copy() for b in net.biases]
                bs[layer][idx] += sign * step
                val = logistic_loss(rebuild(net.weights, bs), features, labels)
                if store == "hi":
                    hi = val
                else:
                    lo = val
            gb[idx] = (hi - lo) / (2 * step)
        grads_b.append(gb)
    return grads_w, grads_b


def rel_gap(fast: np.ndarray, oracle: np.ndarray) -> float:
    denom = max(1.0, float(np.abs(oracle).max(initial=0.0)))
    return float(np.abs(fast - oracle).max(initial=0.0)) / denom


def random_interaction_set(n: int, seed: int) -> InteractionSet:
    rng = np.random.default_rng(seed)
    size = 1 << n
    i_and = rng.normal(0.0, 1.0, size)
    i_or = rng.normal(0.0, 1.0, size)
    i_or[0] = 0.0
    return InteractionSet(
        n=n,
        i_and=as_lattice_vector(i_and, n=n),
        i_or=as_lattice_vector(i_or, n=n),
        bias=0.0,
        tau=0.0,
        omega_and=frozenset(),
        omega_or=frozenset(),
    )


def synthetic_target(n: int, pos: np.ndarray, neg: np.ndarray):
    from ilens.distributions import OrderDistribution

    pos = pos.copy()
    neg = neg.copy()
    pos[0] = 0.0
    neg[0] = 0.0
    return OrderDistribution(n=n, pos=pos, neg=neg)


def decay_mass_fraction(fit: DisentangleResult, n: int) -> float:
    """Share of the fitted order-1..n mass not explained by the spindle part."""
    s = spindle_curve(SpindleParams(fit.spindle.alpha, 1.0), n)[1:]
    spindle_mass = 2.0 * fit.spindle.beta * float(s.sum())
    total = float(fit.theory_pos[1:].sum() + fit.theory_neg[1:].sum())
    if total <= 0.0:
        return 0.0
    return min(1.0, max(0.0, (total - spindle_mass) / total))


def interior_peak_alphas(n: int) -> np.ndarray:
    """Grid alphas whose spindle curve peaks strictly inside 2..n."""
    keep = []
    for alpha in default_fit_grid().alphas:
        curve = spindle_curve(SpindleParams(float(alpha), 1.0), n)
        if int(np.argmax(curve)) >= 2:
            keep.append(float(alpha))
    return np.asarray(keep)


def spindle_rel_residual(dist, params: SpindleParams) -> float:
    curve = spindle_curve(params, dist.n)[1:]
    total = float(dist.pos[1:].sum() + dist.neg[1:].sum())
    if total == 0.0:
        return 0.0
    gap = float(np.abs(dist.pos[1:] - curve).sum() + np.abs(dist.neg[1:] - curve).sum())
    return gap / total


def singles_model(n: int, seed: int) -> SyntheticModel:
    """Mostly-additive hidden labeler: six signed single-variable effects."""
    rng = np.random.default_rng(seed)
    planted_and, planted_or = {}, {}
    for v in rng.choice(n, size=6, replace=False):
        target = planted_and if rng.random() < 0.5 else planted_or
        target[1 << int(v)] = float(rng.choice([-1.0, 1.0]) * rng.uniform(1.5, 3.0))
    return SyntheticModel(n, 0.0, planted_and, planted_or)


# ---------------------------------------------------------------------------
# acceptance checks


def test_universal_matching_any_gamma_reconstructs_exactly():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    n = 8
    size = 1 << n
    worst = 0.0
    for _ in range(50):
        v = rng.normal(0.0, 2.0, size)
        gamma = rng.normal(0.0, 1.0, size)
        gamma[0] = 0.0
        c = v - v[0]
        i_and = mobius_and(0.5 * c + gamma)
        i_or = mobius_or(0.5 * c - gamma)
        recon = reconstruct_all(v[0], i_and, i_or)
        worst = max(worst, float(np.abs(recon - v).max()))
    assert worst <= 1e-9
    assert time.perf_counter() - start < 10.0


def test_fast_transforms_match_naive_sums():
    start = time.perf_counter()
    rng = np.random.default_rng(11)
    for n in range(1, 9):
        size = 1 << n
        for _ in range(20):
            u = rng.normal(0.0, 1.0, size)
            assert rel_gap(mobius_and(u).values, naive_mobius_and(u)) <= 1e-12
            assert rel_gap(zeta_and(u).values, naive_zeta_and(u)) <= 1e-12
            i_or = mobius_or(u).values
            assert rel_gap(i_or, naive_mobius_or(u)) <= 1e-12
            # inverse property: OR effects rebuild the table they came from
            assert rel_gap(naive_or_reconstruction(u[0], i_or), u) <= 1e-12
    assert time.perf_counter() - start < 30.0


def test_sparse_recovery_on_planted_models():
    start = time.perf_counter()
    cfg = ExtractConfig(enable_noise=False)
    for seed in range(20):
        model = random_synthetic_model(6, seed=seed)
        from ilens.model_zoo import synthetic_table

        table = synthetic_table(model)
        iset, params, _ = extract(table, cfg)
        extracted_l1 = float(
            np.abs(iset.i_and.values[1:]).sum() + np.abs(iset.i_or.values[1:]).sum()
        )
        assert extracted_l1 <= model.planted_l1() + 1e-3
        assert matching_error(table, iset, params) <= 1e-6
    assert time.perf_counter() - start < 120.0


def test_damping_identity_hand_case_and_order_attenuation():
    import warnings

    import pytest

    from ilens.errors import LinearAlgebraError

    start = time.perf_counter()
    for n in range(1, 9):
        size = 1 << n
        assert np.abs(build_m_matrix(0.0, n, "AND") - np.eye(size)).max() <= 1e-8
        # the OR system is singular at exactly zero (the empty set never
        # fires) and reaches the identity on nonempty subsets as a limit
        with pytest.raises(LinearAlgebraError):
            build_m_matrix(0.0, n, "OR")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            m_or = build_m_matrix(1e-9, n, "OR")
        assert np.abs(m_or[1:, 1:] - np.eye(size - 1)).max() <= 1e-8
        assert np.abs(m_or[:, 0]).max() == 0.0
        assert np.abs(m_or[0, 1:]).max() == 0.0
        # operator form: zero uncertainty leaves every effect untouched
        iset = random_interaction_set(n, seed=50 + n)
        same = decay_predict(iset, 0.0)
        assert np.abs(same.i_and.values - iset.i_and.values).max() <= 1e-8
        assert np.abs(same.i_or.values - iset.i_or.values).max() <= 1e-8

    hand = np.array([[9.0, 4.0], [2.0, 3.0]]) / 19.0
    assert np.abs(build_m_matrix(1.0, 1, "AND") - hand).max() <= 1e-12

    n = 8
    orders = mask_orders(n)
    for delta in (0.01, 0.1, 1.0):
        pooled_orig = np.zeros(n + 1)
        pooled_damped = np.zeros(n + 1)
        for seed in range(100, 120):
            iset = random_interaction_set(n, seed)
            damped = decay_predict(iset, delta)
            orig_mass = np.zeros(n + 1)
            damped_mass = np.zeros(n + 1)
            for m in range(1, n + 1):
                sel = orders == m
                orig_mass[m] = (
                    np.abs(iset.i_and.values[sel]).sum()
                    + np.abs(iset.i_or.values[sel]).sum()
                )
                damped_mass[m] = (
                    np.abs(damped.i_and.values[sel]).sum()
                    + np.abs(damped.i_or.values[sel]).sum()
                )
            # per draw: the top half of the orders keeps a smaller share
            low = damped_mass[1:5].sum() / orig_mass[1:5].sum()
            high = damped_mass[5:].sum() / orig_mass[5:].sum()
            assert high <= low + 1e-12
            pooled_orig += orig_mass
            pooled_damped += damped_mass
        retention = pooled_damped[1:] / pooled_orig[1:]
        assert np.all(np.diff(retention) <= 1e-9)
    assert time.perf_counter() - start < 60.0


def test_spindle_binomial_limit_and_interior_maximum():
    beta = 1.7
    for n in range(1, 16):
        curve = spindle_curve(SpindleParams(alpha=1.0, beta=beta), n)
        exact = np.array([beta * math.comb(n, m) for m in range(n + 1)])
        assert np.abs(curve - exact).max() <= 1e-9 * exact.max()

    curve = spindle_curve(SpindleParams(alpha=1.0, beta=1.3), 10)
    assert int(np.argmax(curve)) == 5
    assert curve[5] > curve[4] and curve[5] > curve[6]
    assert abs(curve[5] - 252.0 * 1.3) <= 1e-9 * 252.0 * 1.3


def test_disentangle_recovers_synthesized_components():
    start = time.perf_counter()
    n = 10
    grid = default_fit_grid()
    i_star = random_interaction_set(n, seed=41)
    alpha_true = 0.6
    beta_true = 2.0
    delta_true = float(grid.deltas[20])
    scale_true = 1.5
    spindle = spindle_curve(SpindleParams(alpha_true, beta_true), n)
    damped = order_distribution(decay_predict(i_star, delta_true), salient_only=False)

    # pure spindle input
    fit = disentangle(synthetic_target(n, spindle, spindle), i_star)
    assert abs(fit.spindle.alpha - alpha_true) <= 1e-12
    assert abs(fit.spindle.beta - beta_true) <= 1e-6
    assert abs(fit.decay.decay_scale) <= 1e-6
    assert fit.objective <= 1e-8

    # pure decay input
    fit = disentangle(
        synthetic_target(n, scale_true * damped.pos, scale_true * damped.neg), i_star
    )
    assert abs(fit.decay.delta - delta_true) <= 1e-15
    assert abs(fit.decay.decay_scale - scale_true) <= 1e-6
    assert abs(fit.spindle.beta) <= 1e-6
    assert fit.objective <= 1e-8

    # sum of both
    fit = disentangle(
        synthetic_target(
            n, spindle + scale_true * damped.pos, spindle + scale_true * damped.neg
        ),
        i_star,
    )
    assert abs(fit.spindle.alpha - alpha_true) <= 1e-12
    assert abs(fit.decay.delta - delta_true) <= 1e-15
    assert abs(fit.spindle.beta - beta_true) <= 1e-6
    assert abs(fit.decay.decay_scale - scale_true) <= 1e-6
    assert fit.objective <= 1e-8

    # off-grid truths land within one grid step
    alpha_off = 0.625
    delta_off = float(np.sqrt(grid.deltas[20] * grid.deltas[21]))
    spindle_off = spindle_curve(SpindleParams(alpha_off, beta_true), n)
    damped_off = order_distribution(decay_predict(i_star, delta_off), salient_only=False)
    fit = disentangle(
        synthetic_target(
            n,
            spindle_off + scale_true * damped_off.pos,
            spindle_off + scale_true * damped_off.neg,
        ),
        i_star,
    )
    assert abs(fit.spindle.alpha - alpha_off) <= 0.05 / 2 + 1e-12
    assert grid.deltas[20] <= fit.decay.delta <= grid.deltas[21]
    assert time.perf_counter() - start < 120.0


def test_gaussian_noise_mass_trend_and_spindle_residual():
    start = time.perf_counter()
    n = 10
    sigmas = (0.02, 0.05, 0.1)
    groups = even_groups(n, 3)
    cfg = ExtractConfig()
    strict_increase = 0
    per_sigma_deltas = {sigma: [] for sigma in sigmas}
    for s in range(5):
        model = random_synthetic_model(n, seed=600 + s)
        data = generate_dataset(model, 3, 200, train_fraction=0.5, seed=700 + s)
        net0 = init_net((n * 3, 64, 64, 64, 1), seed=800 + s)
        snaps = train(
            net0,
            data,
            TrainConfig(
                epochs=60,
                batch_size=16,
                learning_rate=0.15,
                label_noise_ratio=0.05,
                seed=900 + s,
            ),
        )
        net = snaps[-1].net
        rows = [data.features[r] for r in data.train_idx[:2]]
        base_tables = [masked_table(net, row, groups) for row in rows]
        scales = [t.output_scale() for t in base_tables]
        base_sets = [
            extract(t, cfg, population_scale=sc)[0]
            for t, sc in zip(base_tables, scales)
        ]
        masses = []
        for sigma in sigmas:
            noisy = gaussian_perturb(net, sigma, seed=1000 + s)
            deltas = []
            for row, sc, base in zip(rows, scales, base_sets):
                pert = extract(
                    masked_table(noisy, row, groups), cfg, population_scale=sc
                )[0]
                deltas.append(delta_distribution(pert, base))
            mean_delta = mean_distribution(deltas)
            per_sigma_deltas[sigma].append(mean_delta)
            masses.append(float(mean_delta.pos[1:].sum() + mean_delta.neg[1:].sum()))
        if masses[0] < masses[1] < masses[2]:
            strict_increase += 1
    assert strict_increase >= 3

    for sigma in sigmas:
        suite_delta = mean_distribution(per_sigma_deltas[sigma])
        params, _ = fit_spindle(suite_delta)
        assert spindle_rel_residual(suite_delta, params) <= 0.35
    assert time.perf_counter() - start < 600.0


def test_two_stage_decay_dominance_and_delta_argmax():
    start = time.perf_counter()
    n = 10
    groups = even_groups(n, 3)
    cfg = ExtractConfig()
    checkpoints = (0, 2, 4, 8, 16, 32, 64, 128, 200)
    grid = FitGrid(alphas=interior_peak_alphas(n), deltas=default_fit_grid().deltas)
    early_ok = 0
    argmax_ok = 0
    for s in range(5):
        model = random_synthetic_model(n, seed=200 + s)
        data = generate_dataset(model, 3, 200, train_fraction=0.5, seed=300 + s)
        net0 = init_net((n * 3, 64, 64, 64, 1), seed=400 + s)
        snaps = train(
            net0,
            data,
            TrainConfig(
                epochs=200,
                batch_size=16,
                learning_rate=0.15,
                label_noise_ratio=0.05,
                seed=500 + s,
                checkpoint_epochs=checkpoints,
            ),
        )
        rows = [data.features[r] for r in data.train_idx[:3]]
        scales = [masked_table(snaps[-1].net, row, groups).output_scale() for row in rows]
        sets_by_epoch = {}
        for snap in snaps:
            sets_by_epoch[snap.epoch] = [
                extract(masked_table(snap.net, row, groups), cfg, population_scale=sc)[0]
                for row, sc in zip(rows, scales)
            ]

        # (a) while the train and test losses still track each other, the
        # fitted mass is carried mostly by the decay component
        best_early = 0.0
        for snap in snaps:
            gap = snap.test_loss - snap.train_loss
            if not (1 <= snap.epoch <= checkpoints[-1] // 8 and gap < 0.05):
                continue
            isets = sets_by_epoch[snap.epoch]
            mean_d = mean_distribution(
                [order_distribution(iset, salient_only=True) for iset in isets]
            )
            fit = disentangle(mean_d, mean_interactions(isets), grid)
            best_early = max(best_early, decay_mass_fraction(fit, n))
        if best_early >= 0.60:
            early_ok += 1

        # (b) what changes after the losses separate sits at interior orders
        from_snap = snaps[0]
        for snap in snaps[:-1]:
            if snap.test_loss - snap.train_loss < 0.05:
                from_snap = snap
        deltas = [
            delta_distribution(last, first)
            for last, first in zip(sets_by_epoch[snaps[-1].epoch], sets_by_epoch[from_snap.epoch])
        ]
        if 3 <= argmax_order(mean_distribution(deltas)) <= 8:
            argmax_ok += 1
    assert early_ok >= 4
    assert argmax_ok >= 4
    assert time.perf_counter() - start < 900.0


def test_orderwise_similarity_declines_with_order():
    start = time.perf_counter()
    n = 8
    groups = even_groups(n, 1)
    cfg = ExtractConfig(iterations=2500)
    all_sims = []
    for s in range(5):
        model = singles_model(n, 1200 + s)
        data = generate_dataset(model, 1, 180, train_fraction=150 / 180, seed=1300 + s)
        net0 = init_net((n, 16, 1), seed=1400 + s)
        snaps = train(
            net0,
            data,
            TrainConfig(
                epochs=300,
                batch_size=16,
                learning_rate=0.1,
                label_noise_ratio=0.25,
                seed=1500 + s,
            ),
        )
        net = snaps[-1].net
        rows = list(data.train_idx[:30]) + list(data.test_idx[:30])
        tables = [masked_table(net, data.features[r], groups) for r in rows]
        scale = float(np.mean([t.output_scale() for t in tables]))
        isets = [extract(t, cfg, population_scale=scale)[0] for t in tables]
        all_sims.append(orderwise_jaccard(isets[:30], isets[30:]))
    import warnings

    stacked = np.vstack(all_sims)
    with warnings.catch_warnings():
        # order 0 has no populated slots in any run and stays NaN
        warnings.simplefilter("ignore", RuntimeWarning)
        suite_sims = np.nanmean(stacked, axis=0)
    assert trend_statistic(suite_sims) <= -0.5
    assert time.perf_counter() - start < 900.0


def test_backprop_matches_finite_differences():
    shapes = [
        (5, 8, 1),
        (6, 10, 4, 1),
        (4, 6, 1),
        (7, 5, 5, 1),
        (3, 12, 1),
        (5, 4, 4, 4, 1),
        (8, 6, 1),
        (4, 9, 3, 1),
        (6, 6, 6, 1),
        (5, 7, 1),
    ]
    from ilens.model_zoo import SyntheticDataset, input_gradient

    for seed, shape in enumerate(shapes):
        rng = np.random.default_rng(3000 + seed)
        net = init_net(shape, seed=3000 + seed)
        x = rng.normal(0.0, 1.0, shape[0])
        bp = input_gradient(net, x)
        fd = fd_logit_gradient(net, x)
        assert np.abs(bp - fd).max() <= 1e-4 * max(1e-8, np.abs(fd).max())

        features = rng.normal(0.0, 1.0, (6, shape[0]))
        labels = rng.integers(0, 2, 6)
        data = SyntheticDataset(
            features=np.vstack([features, rng.normal(0.0, 1.0, (1, shape[0]))]),
            labels=np.concatenate([labels, [0]]),
            train_idx=np.arange(6),
            test_idx=np.array([6]),
        )
        lr = 0.05
        snaps = train(
            net,
            data,
            TrainConfig(epochs=1, batch_size=6, learning_rate=lr, seed=seed),
        )
        stepped = snaps[-1].net
        fd_w, fd_b = fd_loss_gradients(net, features, labels)
        for layer in range(len(net.weights)):
            est_w = (net.weights[layer] - stepped.weights[layer]) / lr
            est_b = (net.biases[layer] - stepped.biases[layer]) / lr
            assert np.abs(est_w - fd_w[layer]).max() <= 1e-4 * max(
                1e-8, np.abs(fd_w[layer]).max()
            )
            assert np.abs(est_b - fd_b[layer]).max() <= 1e-4 * max(
                1e-8, np.abs(fd_b[layer]).max()
            )
