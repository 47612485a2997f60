import numpy as np

from rpd.verify import FAIL, PASS, SKIPPED, gradient_check_error, run_verification


def test_fresh_suite_passes():
    rep = run_verification(seed=0, n_draws=2000)
    assert rep.ok, rep.format()
    assert all(c.status == PASS for c in rep.results)
    names = [c.name for c in rep.results]
    assert "mu_from_eps vs mu_tilde" in names
    assert len(set(names)) == len(names)


def test_other_seed_passes():
    assert run_verification(seed=123, n_draws=1000).ok


def test_stabilised_branch_skips_identities():
    rep = run_verification(seed=0, n_draws=500, delta=0.01)
    skipped = [c for c in rep.results if c.status == SKIPPED]
    assert skipped and all(c.name.startswith("aux ") for c in skipped)
    assert rep.ok
    assert "stabilized, skipped" in rep.format()


def test_report_csv(tmp_path):
    rep = run_verification(seed=0, n_draws=300)
    rep.to_csv(tmp_path / "v.csv")
    rows = (tmp_path / "v.csv").read_text().splitlines()
    assert len(rows) == len(rep.results) + 1


def test_gradient_check():
    assert gradient_check_error(np.random.default_rng(0)) < 1e-6


def test_failure_is_named(monkeypatch):
    import rpd.diffusion as D

    orig = D.posterior_params

    def shifted(*a, **k):
        p = orig(*a, **k)
        return type(p)(p.mu_tilde + 1e-3, p.beta_tilde, p.nu)

    monkeypatch.setattr(D, "posterior_params", shifted)
    rep = run_verification(seed=0, n_draws=300)
    assert not rep.ok
    assert "mu_from_eps vs mu_tilde" in rep.failures
    assert all(c.status in (PASS, FAIL, SKIPPED) for c in rep.results)
