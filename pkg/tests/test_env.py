import numpy as np
import pytest

from oracles import physics_scalar

from dlbc.env import (
    EnvConfig,
    PursuitEnv,
    VecPursuitEnv,
    WorldState,
    evader_actions,
    read_trajectory,
    rollout_trajectory,
    write_trajectory,
)


def test_config_validation():
    with pytest.raises(ValueError):
        EnvConfig(damping=1.0)
    with pytest.raises(ValueError):
        EnvConfig(evader_max_speed=0.5)
    with pytest.raises(ValueError):
        EnvConfig(dt=0)
    with pytest.raises(ValueError):
        EnvConfig.tier("9v2")


@pytest.mark.parametrize("tier,dim", [("5v2", 20), ("6v2", 22), ("7v2", 24)])
def test_observation_length(tier, dim):
    cfg = EnvConfig.tier(tier)
    assert cfg.obs_dim == 4 + 2 * (cfg.num_pursuers - 1) + 4 * cfg.num_evaders == dim
    _, obs = PursuitEnv(cfg).reset(3)
    assert obs.shape == (cfg.num_pursuers, dim)


def test_observation_layout():
    cfg = EnvConfig(num_pursuers=3, num_evaders=1)
    env = PursuitEnv(cfg)
    env.reset(0)
    env.state = WorldState(
        pos=np.array([[0.1, 0.2], [0.5, -0.3], [-0.4, 0.0], [0.9, 0.9]]),
        vel=np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5], [-0.2, 0.1]]),
    )
    o = env.observations()[1]
    expected = [0.5, -0.3, 0.0, 1.0, -0.4, 0.5, -0.9, 0.3, 0.4, 1.2, -0.2, -0.9]
    np.testing.assert_allclose(o, expected, atol=1e-12)


def test_reset_determinism_and_variation():
    cfg = EnvConfig.tier("7v2")
    a, _ = PursuitEnv(cfg).reset(42)
    b, _ = PursuitEnv(cfg).reset(42)
    c, _ = PursuitEnv(cfg).reset(43)
    assert np.array_equal(a.pos, b.pos)
    assert not np.array_equal(a.pos, c.pos)
    assert np.all(a.vel == 0) and a.step == 0


def test_reset_non_overlapping_1000_seeds():
    cfg = EnvConfig.tier("7v2")
    env = PursuitEnv(cfg)
    radii = cfg.radii()
    min_sep = radii[:, None] + radii[None, :]
    off_diag = ~np.eye(cfg.num_entities, dtype=bool)
    for seed in range(1000):
        state, _ = env.reset(seed)
        d = np.linalg.norm(state.pos[:, None] - state.pos[None, :], axis=-1)
        assert np.all(d[off_diag] >= min_sep[off_diag])
        assert np.all(np.abs(state.pos) <= cfg.half_width)


def test_reset_arena_too_small():
    with pytest.raises(ValueError, match="arena too small"):
        PursuitEnv(EnvConfig(half_width=0.1, num_pursuers=7)).reset(0)


def test_zero_action_at_rest_keeps_pursuers():
    cfg = EnvConfig.tier("5v2")
    env = PursuitEnv(cfg)
    s0, _ = env.reset(1)
    env.step(np.zeros((5, 2)))
    np.testing.assert_array_equal(env.state.pos[:5], s0.pos[:5])


def test_zero_action_damps_velocity():
    cfg = EnvConfig.tier("5v2")
    env = PursuitEnv(cfg)
    env.reset(1)
    env.state.vel[:5] = np.array([[0.3, -0.2]] * 5)
    env.step(np.zeros((5, 2)))
    np.testing.assert_allclose(env.state.vel[:5], cfg.damping * np.array([[0.3, -0.2]] * 5))


def test_step_errors():
    env = PursuitEnv(EnvConfig.tier("5v2"))
    env.reset(0)
    with pytest.raises(ValueError):
        env.step(np.zeros((4, 2)))
    bad = np.zeros((5, 2))
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        env.step(bad)


def test_physics_matches_scalar_oracle_100_steps():
    cfg = EnvConfig.tier("6v2")
    env = PursuitEnv(cfg)
    env.reset(7)
    rng = np.random.default_rng(0)
    pos = [tuple(p) for p in env.state.pos]
    vel = [tuple(v) for v in env.state.vel]
    accel = [cfg.pursuer_accel] * 6 + [cfg.evader_accel] * 2
    caps = [cfg.pursuer_max_speed] * 6 + [cfg.evader_max_speed] * 2
    for _ in range(100):
        acts = rng.uniform(-1.5, 1.5, size=(6, 2))
        ev = evader_actions(np.array(pos), cfg)
        all_acts = [tuple(a) for a in np.clip(acts, -1, 1)] + [tuple(a) for a in ev]
        pos, vel = physics_scalar(pos, vel, all_acts, accel, caps, cfg.damping, cfg.dt, cfg.half_width)
        env.step(acts)
        np.testing.assert_allclose(env.state.pos, np.array(pos), atol=1e-12, rtol=0)
        np.testing.assert_allclose(env.state.vel, np.array(vel), atol=1e-12, rtol=0)


def test_boundedness_and_termination():
    cfg = EnvConfig.tier("5v2", max_steps=60)
    env = PursuitEnv(cfg)
    env.reset(3)
    rng = np.random.default_rng(1)
    for t in range(1, 61):
        res = env.step(rng.choice([-1.0, 1.0], size=(5, 2)))
        assert np.all(np.abs(env.state.pos) <= cfg.half_width)
        speed = np.linalg.norm(env.state.vel, axis=1)
        assert np.all(speed <= cfg.max_speeds() + 1e-12)
        assert np.all(np.isfinite(res.rewards))
        assert res.done == (t == 60)


def test_evader_flees_from_pursuer_on_left():
    cfg = EnvConfig(num_pursuers=1, num_evaders=1)
    pos = np.array([[-0.3, 0.0], [0.0, 0.0]])
    act = evader_actions(pos, cfg)[0]
    assert act[0] > 0 and abs(act[1]) < 1e-12


def test_evader_symmetric_cancellation():
    cfg = EnvConfig(num_pursuers=4, num_evaders=1)
    pos = np.array([[0.4, 0], [-0.4, 0], [0, 0.4], [0, -0.4], [0, 0]], dtype=float)
    np.testing.assert_allclose(evader_actions(pos, cfg)[0], [0.0, 0.0], atol=1e-12)


def test_evader_pushed_off_wall():
    cfg = EnvConfig(num_pursuers=1, num_evaders=1)
    # evader at right wall, pursuer further inside (behind it in the flight direction)
    pos = np.array([[0.6, 0.1], [0.99, 0.1]])
    assert evader_actions(pos, cfg)[0, 0] < 0
    pos = np.array([[0.9, 0.0], [0.999, 0.0]])
    assert evader_actions(pos, cfg)[0, 0] < 0


def test_rewards():
    cfg = EnvConfig(num_pursuers=2, num_evaders=2, shaping_coeff=0.0)
    env = PursuitEnv(cfg)
    env.reset(0)
    env.state = WorldState(np.array([[0.0, 0.0], [0.5, 0.5], [0.05, 0.0], [-0.5, -0.5]]), np.zeros((4, 2)))
    np.testing.assert_allclose(env.compute_rewards(), [10.0, 0.0])
    shaped = PursuitEnv(EnvConfig(num_pursuers=1, num_evaders=2, shaping_coeff=0.01))
    shaped.reset(0)
    shaped.state = WorldState(np.array([[0.0, 0.0], [0.0, 2.0], [-0.9, -0.9]]), np.zeros((3, 2)))
    np.testing.assert_allclose(shaped.compute_rewards(), [-0.01 * np.hypot(0.9, 0.9)])
    wide = PursuitEnv(EnvConfig(num_pursuers=1, num_evaders=2, shaping_coeff=0.01, half_width=2.0))
    wide.reset(0)
    # nearest evader at distance exactly 2.0
    wide.state = WorldState(np.array([[0.0, 1.0], [0.0, -1.0], [1.9, 1.9]]), np.zeros((3, 2)))
    np.testing.assert_allclose(wide.compute_rewards(), [-0.02])


def test_step_determinism():
    def run():
        env = PursuitEnv(EnvConfig.tier("5v2"))
        env.reset(11)
        acts = np.random.default_rng(2).uniform(-1, 1, size=(30, 5, 2))
        return [env.step(a).rewards.tolist() for a in acts], env.state.pos.copy()

    r1, p1 = run()
    r2, p2 = run()
    assert r1 == r2 and np.array_equal(p1, p2)


def test_vec_env_matches_single_envs():
    cfg = EnvConfig.tier("5v2", max_steps=20)
    venv = VecPursuitEnv(cfg, 3, seed=5)
    obs = venv.reset()
    singles = []
    for k in range(3):
        env = PursuitEnv(cfg)
        env.reset(0)
        env.state = WorldState(venv.pos[k].copy(), venv.vel[k].copy())
        singles.append(env)
    rng = np.random.default_rng(0)
    for t in range(20):
        acts = rng.uniform(-1, 1, size=(3, 5, 2))
        obs, rew, dones, finished = venv.step(acts)
        for k, env in enumerate(singles):
            res = env.step(acts[k])
            np.testing.assert_allclose(rew[k], res.rewards, atol=1e-14)
            if t < 19:
                np.testing.assert_allclose(obs[k], res.observations, atol=1e-14)
        assert dones.all() == (t == 19)
    assert len(finished) == 3 and np.all(venv.steps == 0)


def test_trajectory_roundtrip(tmp_path):
    cfg = EnvConfig.tier("5v2", max_steps=15)
    recs = rollout_trajectory(PursuitEnv(cfg), lambda obs: np.zeros((5, 2)), seed=4)
    assert len(recs) == 16 and recs[-1]["step"] == 15
    path = tmp_path / "traj.jsonl"
    write_trajectory(recs, path)
    assert read_trajectory(path) == recs
