"""Mock encoder, trial sweeps, quantizer selection, and the encode loop."""

import math

import pytest

from lfalloc import (
    AllocationResult,
    EncodeFailed,
    FrameCoord,
    IncompleteInput,
    MockEncoder,
    MockEncoderConfig,
    MockSetup,
    ParseError,
    RDSample,
    eval_model,
    fit_power_model,
    mock_encode,
    read_mock_config,
    read_trace_csv,
    run_first_iteration,
    run_iteration,
    run_to_convergence,
    select_qp,
    spiral_order,
    trial_sweep,
    unify_weights,
    write_mock_config,
    write_trace_csv,
)
from lfalloc.encodesim import last_iteration_distortions, trace_to_parsed


def single_frame_setup(a=3e7, b=-0.3, **kwargs):
    grid = spiral_order(1, 1)
    config = MockEncoderConfig(frame_params={FrameCoord(0, 0): (a, b)}, **kwargs)
    weights = unify_weights({FrameCoord(0, 0): 1.0})
    return MockSetup(config=config, grid=grid, weights=weights)


def small_grid_setup(gamma=0.0):
    grid = spiral_order(2, 2)
    params = {
        c: (3e7 * (1.0 + 0.05 * i), -(0.28 + 0.004 * i))
        for i, c in enumerate(grid.coding_order)
    }
    config = MockEncoderConfig(
        frame_params=params, dependency_gamma=gamma, ref_norm=2e6, frame_pixels=100_000
    )
    weights = unify_weights({c: 1.0 for c in grid.coding_order})
    return MockSetup(config=config, grid=grid, weights=weights)


class TestMockEncoderConfig:
    """Validation on the mock parameters."""

    def test_empty_params(self):
        with pytest.raises(ValueError):
            MockEncoderConfig(frame_params={})

    def test_bad_frame_law(self):
        with pytest.raises(ValueError):
            MockEncoderConfig(frame_params={FrameCoord(0, 0): (0.0, -0.3)})
        with pytest.raises(ValueError):
            MockEncoderConfig(frame_params={FrameCoord(0, 0): (1e7, 0.1)})

    def test_bad_scalars(self):
        params = {FrameCoord(0, 0): (1e7, -0.3)}
        with pytest.raises(ValueError):
            MockEncoderConfig(frame_params=params, rate_anchor=0.0)
        with pytest.raises(ValueError):
            MockEncoderConfig(frame_params=params, dependency_gamma=-0.1)
        with pytest.raises(ValueError):
            MockEncoderConfig(frame_params=params, rate_qp_halving=0.0)
        with pytest.raises(ValueError):
            MockEncoderConfig(frame_params=params, frame_pixels=0)


class TestMockEncode:
    """Closed-form quantizer response."""

    def test_anchor_rate(self):
        setup = single_frame_setup()
        rate, _ = mock_encode(setup.config, FrameCoord(0, 0), 30, 0.0)
        assert rate == 1e6

    def test_rate_halves_per_halving_span(self):
        setup = single_frame_setup()
        rate, _ = mock_encode(setup.config, FrameCoord(0, 0), 36, 0.0)
        assert rate == 5e5
        rate, _ = mock_encode(setup.config, FrameCoord(0, 0), 24, 0.0)
        assert rate == 2e6

    def test_sse_follows_hidden_law(self):
        setup = single_frame_setup(a=5.0, b=-1.0, rate_anchor=1.0)
        _, sse = mock_encode(setup.config, FrameCoord(0, 0), 30, 0.0)
        assert sse == 5.0

    def test_reference_inflation(self):
        setup = single_frame_setup(
            a=5.0, b=-1.0, rate_anchor=1.0, dependency_gamma=2.0, ref_norm=4.0
        )
        _, sse = mock_encode(setup.config, FrameCoord(0, 0), 30, 2.0)
        assert sse == 10.0

    def test_monotone_in_qp(self):
        setup = single_frame_setup()
        outputs = [
            mock_encode(setup.config, FrameCoord(0, 0), qp, 0.0) for qp in range(0, 52, 3)
        ]
        rates = [r for r, _ in outputs]
        sses = [s for _, s in outputs]
        assert rates == sorted(rates, reverse=True)
        assert sses == sorted(sses)


class TestMockEncoderAdapter:
    """Adapter guards around the closed form."""

    def test_qp_range_enforced(self):
        adapter = MockEncoder(single_frame_setup().config)
        with pytest.raises(EncodeFailed):
            adapter.encode_frame(FrameCoord(0, 0), -1, 0.0)
        with pytest.raises(EncodeFailed):
            adapter.encode_frame(FrameCoord(0, 0), 52, 0.0)

    def test_unknown_frame(self):
        adapter = MockEncoder(single_frame_setup().config)
        with pytest.raises(EncodeFailed):
            adapter.encode_frame(FrameCoord(5, 5), 30, 0.0)

    def test_total_pixels(self):
        setup = small_grid_setup()
        assert MockEncoder(setup.config).total_pixels == 4 * 100_000


class TestTrialSweep:
    """Quantizer sweeps around a working point."""

    def test_interior_window(self):
        adapter = MockEncoder(single_frame_setup().config)
        sweep = trial_sweep(adapter, FrameCoord(0, 0), 30, 2, 0.0)
        assert [s.qp for s in sweep] == [28, 29, 30, 31, 32]

    def test_clamped_at_low_end(self):
        adapter = MockEncoder(single_frame_setup().config)
        sweep = trial_sweep(adapter, FrameCoord(0, 0), 1, 2, 0.0)
        assert [s.qp for s in sweep] == [0, 1, 2, 3]

    def test_clamped_at_high_end(self):
        adapter = MockEncoder(single_frame_setup().config)
        sweep = trial_sweep(adapter, FrameCoord(0, 0), 51, 2, 0.0)
        assert [s.qp for s in sweep] == [49, 50, 51]

    def test_half_width_must_be_positive(self):
        adapter = MockEncoder(single_frame_setup().config)
        with pytest.raises(ValueError):
            trial_sweep(adapter, FrameCoord(0, 0), 30, 0, 0.0)

    def test_repeat_sweeps_identical(self):
        adapter = MockEncoder(single_frame_setup().config)
        first = trial_sweep(adapter, FrameCoord(0, 0), 30, 2, 0.0)
        second = trial_sweep(adapter, FrameCoord(0, 0), 30, 2, 0.0)
        assert first == second

    def test_fit_recovers_hidden_law(self):
        setup = single_frame_setup(a=3e7, b=-0.3)
        adapter = MockEncoder(setup.config)
        sweep = trial_sweep(adapter, FrameCoord(0, 0), 30, 2, 0.0)
        fit = fit_power_model(sweep)
        assert fit.alpha == pytest.approx(3e7, rel=1e-9)
        assert fit.beta == pytest.approx(-0.3, rel=1e-9)

    def test_fit_absorbs_reference_inflation_into_alpha(self):
        setup = single_frame_setup(a=3e7, b=-0.3, dependency_gamma=0.5, ref_norm=2e6)
        adapter = MockEncoder(setup.config)
        ref_sse = 1e6
        sweep = trial_sweep(adapter, FrameCoord(0, 0), 30, 2, ref_sse)
        fit = fit_power_model(sweep)
        assert fit.alpha == pytest.approx(3e7 * 1.25, rel=1e-9)
        assert fit.beta == pytest.approx(-0.3, rel=1e-9)
        for sample in sweep:
            assert eval_model(fit, sample.rate) == pytest.approx(sample.sse, rel=1e-9)


class TestSelectQp:
    """Nearest-rate quantizer choice over a sweep."""

    def test_exact_hit(self):
        samples = [RDSample(qp=q, rate=1600.0 / 2 ** i, sse=1.0 + i) for i, q in enumerate((10, 11, 12))]
        assert select_qp(samples, 800.0) == 11

    def test_tie_prefers_lower_qp(self):
        samples = [RDSample(qp=10, rate=800.0, sse=1.0), RDSample(qp=11, rate=400.0, sse=2.0)]
        assert select_qp(samples, 600.0) == 10

    def test_target_above_all_rates(self):
        samples = [RDSample(qp=q, rate=1000.0 - 100 * q, sse=1.0 + q) for q in range(3)]
        assert select_qp(samples, 1e9) == 0

    def test_target_below_all_rates(self):
        samples = [RDSample(qp=q, rate=1000.0 - 100 * q, sse=1.0 + q) for q in range(3)]
        assert select_qp(samples, 0.001) == 2

    def test_empty_sweep(self):
        with pytest.raises(ValueError):
            select_qp([], 1.0)


class TestRunFirstIteration:
    """Baseline-share first pass."""

    def test_single_frame_targets_whole_budget(self):
        setup = single_frame_setup()
        adapter = MockEncoder(setup.config)
        entry = run_first_iteration(adapter, setup.grid, setup.weights, 1e6)
        assert entry.qps[FrameCoord(0, 0)] == 30
        assert entry.rates[FrameCoord(0, 0)] == 1e6

    def test_uniform_budget_gives_uniform_qps(self):
        grid = spiral_order(3, 3)
        config = MockEncoderConfig(
            frame_params={c: (3e7, -0.3) for c in grid.coding_order}, frame_pixels=1000
        )
        weights = unify_weights({c: 1.0 for c in grid.coding_order})
        entry = run_first_iteration(MockEncoder(config), grid, weights, 9e6)
        assert set(entry.qps.values()) == {30}

    def test_huge_budget_clamps_to_lowest_qp(self):
        setup = single_frame_setup()
        adapter = MockEncoder(setup.config)
        entry = run_first_iteration(adapter, setup.grid, setup.weights, 1e12)
        assert entry.qps[FrameCoord(0, 0)] == 0

    def test_tiny_budget_clamps_to_highest_qp(self):
        setup = single_frame_setup()
        adapter = MockEncoder(setup.config)
        entry = run_first_iteration(adapter, setup.grid, setup.weights, 1.0)
        assert entry.qps[FrameCoord(0, 0)] == 51

    def test_weight2_baseline_shifts_rate_toward_heavy_frames(self):
        grid = spiral_order(2, 1)
        heavy, light = grid.coding_order
        config = MockEncoderConfig(
            frame_params={c: (3e7, -0.3) for c in grid.coding_order}, frame_pixels=1000
        )
        weights = unify_weights({heavy: 1.0, light: 0.5})
        entry = run_first_iteration(
            MockEncoder(config), grid, weights, 2e6, baseline="weight2"
        )
        assert entry.rates[heavy] > entry.rates[light]

    def test_unknown_baseline(self):
        setup = single_frame_setup()
        with pytest.raises(ValueError):
            run_first_iteration(
                MockEncoder(setup.config), setup.grid, setup.weights, 1e6, baseline="spam"
            )

    def test_bad_budget(self):
        setup = single_frame_setup()
        with pytest.raises(ValueError):
            run_first_iteration(MockEncoder(setup.config), setup.grid, setup.weights, 0.0)

    def test_models_fitted_per_frame(self):
        setup = small_grid_setup(gamma=0.2)
        adapter = MockEncoder(setup.config)
        entry = run_first_iteration(adapter, setup.grid, setup.weights, 4e6)
        assert set(entry.models) == set(setup.grid.coding_order)
        assert math.isfinite(entry.cost.total)
        assert math.isfinite(entry.wpsnr_db)

    def test_realized_chain_matches_manual_walk(self):
        setup = small_grid_setup(gamma=0.5)
        adapter = MockEncoder(setup.config)
        entry = run_first_iteration(adapter, setup.grid, setup.weights, 4e6)
        ref = 0.0
        for coord in setup.grid.coding_order:
            rate, sse = mock_encode(setup.config, coord, entry.qps[coord], ref)
            assert entry.rates[coord] == rate
            assert entry.sses[coord] == sse
            ref = sse


class TestRunIteration:
    """Re-encode passes toward an allocation."""

    def allocation_for(self, entry, rates):
        return AllocationResult(
            rates=rates,
            objective=entry.cost,
            kkt_residual=0.0,
            iterations=1,
            budget_used=sum(rates.values()),
        )

    def test_fixed_point_keeps_qps(self):
        setup = small_grid_setup(gamma=0.2)
        adapter = MockEncoder(setup.config)
        first = run_first_iteration(adapter, setup.grid, setup.weights, 4e6)
        allocation = self.allocation_for(first, dict(first.rates))
        second = run_iteration(
            adapter, first, allocation, setup.grid, setup.weights
        )
        assert second.qps == first.qps
        assert second.rates == first.rates

    def test_doubled_rate_drops_qp_by_halving_span(self):
        setup = single_frame_setup()
        adapter = MockEncoder(setup.config)
        first = run_first_iteration(adapter, setup.grid, setup.weights, 1e6)
        assert first.qps[FrameCoord(0, 0)] == 30
        allocation = self.allocation_for(first, {FrameCoord(0, 0): 2e6})
        second = run_iteration(
            adapter, first, allocation, setup.grid, setup.weights, k_sweep=7
        )
        assert abs(second.qps[FrameCoord(0, 0)] - 24) <= 1
        assert second.rates[FrameCoord(0, 0)] == 2e6

    def test_missing_allocation_entry(self):
        setup = small_grid_setup()
        adapter = MockEncoder(setup.config)
        first = run_first_iteration(adapter, setup.grid, setup.weights, 4e6)
        partial = dict(first.rates)
        partial.pop(setup.grid.coding_order[-1])
        allocation = self.allocation_for(first, partial)
        with pytest.raises(IncompleteInput):
            run_iteration(adapter, first, allocation, setup.grid, setup.weights)


class TestRunToConvergence:
    """The outer allocation and re-encode loop."""

    def test_decoupled_mock_settles_within_three_passes(self, decoupled_setup):
        adapter = MockEncoder(decoupled_setup.config)
        trace = run_to_convergence(
            adapter, decoupled_setup.grid, decoupled_setup.weights, 2e7, 0.0, 8
        )
        assert trace.converged
        assert len(trace.entries) <= 3

    def test_coupled_mock_converges(self, coupled_setup):
        adapter = MockEncoder(coupled_setup.config)
        trace = run_to_convergence(
            adapter, coupled_setup.grid, coupled_setup.weights, 2e7, 5.0, 8
        )
        assert trace.converged
        assert len(trace.entries) <= 6

    def test_iteration_cap_leaves_converged_false(self, coupled_setup):
        adapter = MockEncoder(coupled_setup.config)
        trace = run_to_convergence(
            adapter, coupled_setup.grid, coupled_setup.weights, 2e7, 5.0, 2
        )
        assert not trace.converged
        assert len(trace.entries) == 2

    def test_single_pass_cannot_converge(self, decoupled_setup):
        adapter = MockEncoder(decoupled_setup.config)
        trace = run_to_convergence(
            adapter, decoupled_setup.grid, decoupled_setup.weights, 2e7, 0.0, 1
        )
        assert not trace.converged
        assert len(trace.entries) == 1

    def test_zero_max_iters_rejected(self, decoupled_setup):
        adapter = MockEncoder(decoupled_setup.config)
        with pytest.raises(ValueError):
            run_to_convergence(
                adapter, decoupled_setup.grid, decoupled_setup.weights, 2e7, 0.0, 0
            )

    def test_deterministic_rerun(self, coupled_setup):
        def run():
            adapter = MockEncoder(coupled_setup.config)
            return run_to_convergence(
                adapter, coupled_setup.grid, coupled_setup.weights, 2e7, 5.0, 8
            )

        first, second = run(), run()
        assert first.converged == second.converged
        assert len(first.entries) == len(second.entries)
        for a, b in zip(first.entries, second.entries):
            assert a.qps == b.qps
            assert a.rates == b.rates
            assert a.sses == b.sses

    def test_converged_state_is_stable_one_more_pass(self, decoupled_setup):
        from lfalloc import AllocationProblem, allocate

        adapter = MockEncoder(decoupled_setup.config)
        trace = run_to_convergence(
            adapter, decoupled_setup.grid, decoupled_setup.weights, 2e7, 0.0, 8
        )
        assert trace.converged
        last = trace.entries[-1]
        problem = AllocationProblem(
            grid=decoupled_setup.grid,
            weights=decoupled_setup.weights,
            models=last.models,
            budget=2e7,
            lam=0.0,
        )
        extra = run_iteration(
            adapter, last, allocate(problem), decoupled_setup.grid, decoupled_setup.weights
        )
        for c in decoupled_setup.grid.coding_order:
            assert abs(extra.rates[c] - last.rates[c]) / last.rates[c] < 0.01


class TestMockConfigIO:
    """Mock configuration files."""

    def test_round_trip_fixed_point(self, tmp_path, coupled_setup):
        first = tmp_path / "a.txt"
        second = tmp_path / "b.txt"
        write_mock_config(coupled_setup, first)
        write_mock_config(read_mock_config(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_defaults_applied(self, tmp_path):
        path = tmp_path / "mock.txt"
        path.write_text("width: 1\nheight: 1\nframe: 0,0,3e7,-0.3\n")
        setup = read_mock_config(path)
        assert setup.config.qp_anchor == 30
        assert setup.config.rate_anchor == 1e6
        assert setup.config.dependency_gamma == 0.0
        assert setup.weights.unified[FrameCoord(0, 0)] == 1.0

    def test_optional_weight_column(self, tmp_path):
        path = tmp_path / "mock.txt"
        path.write_text(
            "width: 2\nheight: 1\nframe: 0,0,3e7,-0.3,0.5\nframe: 1,0,3e7,-0.3,1.0\n"
        )
        setup = read_mock_config(path)
        assert setup.weights.unified[FrameCoord(0, 0)] == 0.5

    def test_missing_dimensions(self, tmp_path):
        path = tmp_path / "mock.txt"
        path.write_text("frame: 0,0,3e7,-0.3\n")
        with pytest.raises(ParseError):
            read_mock_config(path)

    def test_missing_frame(self, tmp_path):
        path = tmp_path / "mock.txt"
        path.write_text("width: 2\nheight: 1\nframe: 0,0,3e7,-0.3\n")
        with pytest.raises(ParseError):
            read_mock_config(path)

    def test_bad_law_becomes_parse_error(self, tmp_path):
        path = tmp_path / "mock.txt"
        path.write_text("width: 1\nheight: 1\nframe: 0,0,-1.0,-0.3\n")
        with pytest.raises(ParseError):
            read_mock_config(path)


class TestTraceIO:
    """Iteration trace CSV round trips."""

    def make_trace(self, decoupled_setup):
        adapter = MockEncoder(decoupled_setup.config)
        return run_to_convergence(
            adapter, decoupled_setup.grid, decoupled_setup.weights, 2e7, 0.0, 8
        )

    def test_round_trip_fixed_point(self, tmp_path, decoupled_setup):
        trace = self.make_trace(decoupled_setup)
        first = tmp_path / "a.csv"
        second = tmp_path / "b.csv"
        write_trace_csv(trace, first)
        write_trace_csv(read_trace_csv(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_parse_matches_in_memory_trace(self, tmp_path, decoupled_setup):
        trace = self.make_trace(decoupled_setup)
        path = tmp_path / "trace.csv"
        write_trace_csv(trace, path)
        parsed = read_trace_csv(path)
        assert parsed.converged == trace.converged
        assert len(parsed.iterations) == len(trace.entries)
        reference = trace_to_parsed(trace)
        assert parsed.iterations[-1].rows == reference.iterations[-1].rows
        assert parsed.iterations[-1].total_cost == trace.entries[-1].cost.total

    def test_last_iteration_distortions(self, tmp_path, decoupled_setup):
        trace = self.make_trace(decoupled_setup)
        path = tmp_path / "trace.csv"
        write_trace_csv(trace, path)
        distortions = last_iteration_distortions(read_trace_csv(path))
        assert distortions.sse == trace.entries[-1].sses

    def test_truncated_trace(self, tmp_path, decoupled_setup):
        trace = self.make_trace(decoupled_setup)
        path = tmp_path / "trace.csv"
        write_trace_csv(trace, path)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(ParseError):
            read_trace_csv(path)

    def test_bad_comment(self, tmp_path):
        path = tmp_path / "trace.csv"
        path.write_text("iteration,u,v,qp,rate_bits,sse,alpha,beta\n# spam\n")
        with pytest.raises(ParseError):
            read_trace_csv(path)

    def test_out_of_order_iteration(self, tmp_path):
        path = tmp_path / "trace.csv"
        path.write_text(
            "iteration,u,v,qp,rate_bits,sse,alpha,beta\n"
            "2,0,0,30,1e6,1e5,3e7,-0.3\n"
            "# iteration 2 total_cost 1.0 wpsnr 40.0\n"
            "# converged true\n"
        )
        with pytest.raises(ParseError):
            read_trace_csv(path)
