import json
import struct
import subprocess

import numpy as np
import pytest

import splatsim

SPLAT_PROPS = ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
               "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]


def run(cli, *args, cwd=None):
    return subprocess.run([cli, *map(str, args)], capture_output=True, text=True,
                          cwd=cwd, timeout=600)


def write_manifest(path, scenario, **extra):
    m = {"scenario": str(scenario), "policy": {"kind": "pick_place", "sigma": 0.0},
         "episodes": 3, "seed": 11}
    m.update(extra)
    path.write_text(json.dumps(m))
    return path


def write_splat_ply(path, positions):
    header = ["ply", "format binary_little_endian 1.0",
              f"element vertex {len(positions)}"]
    header += [f"property float {p}" for p in SPLAT_PROPS]
    header.append("end_header")
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode())
        for x, y, z in positions:
            f.write(struct.pack("<14f", x, y, z, 0.5, 0.5, 0.5, 2.0,
                                -5.0, -5.0, -5.0, 1.0, 0.0, 0.0, 0.0))


@pytest.fixture(scope="module")
def toy_runs(cli, assets, tmp_path_factory):
    root = tmp_path_factory.mktemp("eval")
    manifest = write_manifest(root / "m.json", assets / "scenarios" / "toy_packing_mini.json")
    runs = {}
    for name, workers in [("a", 1), ("b", 1), ("c", 2)]:
        out = root / name
        runs[name] = (run(cli, "eval", manifest, "--workers", workers, "--out", out), out)
    return runs


def test_eval_layout_and_exit_code(toy_runs):
    proc, out = toy_runs["a"]
    assert proc.returncode == 0, proc.stderr
    assert (out / "manifest.json").exists()
    assert (out / "summary.json").exists()
    assert sorted(p.name for p in (out / "episodes").iterdir()) == ["ep000", "ep001", "ep002"]
    lines = (out / "outcomes.jsonl").read_text().splitlines()
    assert len(lines) == 3
    summary = json.loads((out / "summary.json").read_text())
    assert summary["provenance"]["config_hash"]
    assert summary["provenance"]["code_version"] == splatsim.__version__
    copy = json.loads((out / "manifest.json").read_text())
    assert copy["workers"] == 1 and copy["seed"] == 11


def test_eval_rerun_and_worker_count_are_bit_exact(toy_runs):
    files = ["outcomes.jsonl", "summary.json", "episodes/ep001/log.jsonl"]
    for f in files:
        a = (toy_runs["a"][1] / f).read_bytes()
        assert a == (toy_runs["b"][1] / f).read_bytes(), f
        assert a == (toy_runs["c"][1] / f).read_bytes(), f


def test_replay_matches_and_confusion(cli, toy_runs):
    out = toy_runs["a"][1]
    proc = run(cli, "replay", out, "--truth", out / "outcomes.jsonl")
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert proc.stdout.count(" match") == 3
    report = json.loads((out / "replay" / "replay.json").read_text())
    c = report["confusion"]
    assert c["fp"] == 0 and c["fn"] == 0 and c["tp"] + c["tn"] == 3


def test_replay_with_perturbed_friction_changes_hash(cli, toy_runs, tmp_path):
    out = toy_runs["a"][1]
    proc = run(cli, "replay", out, "--mu-robot", 0.2, "--out", tmp_path)
    assert proc.returncode in (0, 2), proc.stderr
    original = [json.loads(l)["trajectory_hash"]
                for l in (out / "outcomes.jsonl").read_text().splitlines()]
    replayed = [json.loads(l)["trajectory_hash"]
                for l in (tmp_path / "outcomes.jsonl").read_text().splitlines()]
    assert all(a != b for a, b in zip(original, replayed))


def test_report_scores_and_confusion(cli, toy_runs, tmp_path):
    out = toy_runs["a"][1]
    proc = run(cli, "report", out, "--replay", out / "outcomes.jsonl",
               "--truth", out / "outcomes.jsonl", "--out", tmp_path / "r.json")
    assert proc.returncode == 0, proc.stderr
    r = json.loads((tmp_path / "r.json").read_text())
    assert r["scores"][0]["trials"] == 3
    assert set(r["scores"][0]["posterior"]["quantiles"]) == {"q05", "q25", "q50", "q75", "q95"}
    assert r["confusion"]["fp"] == 0


def test_faulting_policy_gives_partial_exit(cli, assets, tmp_path):
    manifest = write_manifest(
        tmp_path / "m.json", assets / "scenarios" / "push_t_mini.json", episodes=2,
        policy={"kind": "external", "command": "sh -c 'exit 3'", "timeout_s": 5})
    proc = run(cli, "eval", manifest, "--out", tmp_path / "out")
    assert proc.returncode == 2, proc.stderr
    rows = [json.loads(l) for l in (tmp_path / "out" / "outcomes.jsonl").read_text().splitlines()]
    assert len(rows) == 2
    assert all(r["faulted"] and r["fault"] for r in rows)


def test_bad_manifest_is_error(cli, assets, tmp_path):
    m = tmp_path / "m.json"
    m.write_text(json.dumps({"policy": {"kind": "pick_place"}}))
    assert run(cli, "eval", m).returncode == 1
    manifest = write_manifest(tmp_path / "w.json", assets / "scenarios" / "toy_packing_mini.json")
    assert run(cli, "eval", manifest, "--workers", 0).returncode == 1
    assert run(cli, "frobnicate").returncode == 1


def test_align_pose_synthetic_cloud(cli, tmp_path):
    rng = np.random.default_rng(0)
    src = rng.uniform(-0.1, 0.1, (400, 3))
    angle = 0.4
    rot = np.array([[np.cos(angle), -np.sin(angle), 0],
                    [np.sin(angle), np.cos(angle), 0], [0, 0, 1]])
    dst = src @ rot.T + np.array([0.05, -0.02, 0.1])
    np.savetxt(tmp_path / "src.xyz", src)
    np.savetxt(tmp_path / "dst.xyz", dst)
    proc = run(cli, "align", "pose", tmp_path / "src.xyz", tmp_path / "dst.xyz",
               "--out", tmp_path / "t.json")
    assert proc.returncode == 0, proc.stderr
    assert "residual rms" in proc.stdout
    t = json.loads((tmp_path / "t.json").read_text())
    assert t["rms"] < 1e-3
    assert np.allclose(np.array(t["matrix"])[:3, :3], rot, atol=1e-6)


def test_align_color_identity(cli, tmp_path):
    pil = pytest.importorskip("PIL.Image")
    rng = np.random.default_rng(3)
    img = (rng.uniform(0, 255, (24, 32, 3))).astype(np.uint8)
    pil.fromarray(img).save(tmp_path / "a.png")
    proc = run(cli, "align", "color", "--rendered", tmp_path / "a.png",
               "--captured", tmp_path / "a.png", "--out", tmp_path / "c.json")
    assert proc.returncode == 0, proc.stderr
    coef = np.array(json.loads((tmp_path / "c.json").read_text())["coefficients"])
    assert np.allclose(coef, [[0, 0, 0], [1, 1, 1], [0, 0, 0]], atol=1e-9)


def test_align_segment_histogram_totals(cli, assets, tmp_path):
    rng = np.random.default_rng(4)
    pts = rng.uniform([-0.05, -0.05, 0.0], [0.3, 0.05, 0.4], (250, 3))
    write_splat_ply(tmp_path / "robot.ply", pts)
    proc = run(cli, "align", "segment", "--scenario",
               assets / "scenarios" / "toy_packing_mini.json",
               "--kernels", tmp_path / "robot.ply", "--per-link", 200,
               "--out", tmp_path / "labeled.ply")
    assert proc.returncode == 0, proc.stderr
    assert "total 250 of 250 kernels" in proc.stdout
    counts = [int(line.split()[-1]) for line in proc.stdout.splitlines()
              if not line.startswith("total")]
    assert sum(counts) == 250
    assert (tmp_path / "labeled.ply").exists()


@pytest.fixture(scope="module")
def bar_trajectory(tmp_path_factory):
    root = tmp_path_factory.mktemp("sysid")
    g = np.stack(np.meshgrid(np.arange(6), np.arange(2), np.arange(2), indexing="ij"), -1)
    pts = g.reshape(-1, 3) * 0.01 + np.array([0, 0, 0.1])
    model = splatsim.build_spring_mass(pts, connection_radius=0.015, stiffness=500.0,
                                       total_mass=0.024, spring_damping=0.02)
    controls = [i for i, p in enumerate(pts) if p[0] < 1e-9]
    paths = []
    for f in range(25):
        s = min(1.0, f / 15.0)
        paths.append(pts[controls] + np.array([0.02 * s, 0, 0.03 * s]))
    traj = root / "bar.jsonl"
    splatsim.synthesize_trajectory(model, controls, paths, traj)
    config = {
        "twin": {"particle_spacing": 0.01, "total_mass": 0.024, "max_neighbors": 30,
                 "connection_radius": 0.015},
        "sim": {"spring_damping": 0.02},
        "ranges": {"stiffness": [100.0, 3000.0], "damping": [0.02, 0.02]},
        "cem": {"population": 16, "elite": 4, "generations": 8},
        "spsa": {"iterations": 5},
        "accept_loss": 1e-5,
    }
    (root / "sysid.json").write_text(json.dumps(config))
    return root


def test_sysid_recovers_and_writes_trace(cli, bar_trajectory, tmp_path):
    root = bar_trajectory
    proc = run(cli, "sysid", root / "bar.jsonl", "--config", root / "sysid.json",
               "--seed", 3, "--out", tmp_path / "a")
    assert proc.returncode == 0, proc.stdout + proc.stderr
    spec = json.loads((tmp_path / "a" / "twin_spec.json").read_text())
    assert spec["stiffness_mode"] == "per_spring"
    assert len(spec["spring_stiffness"]) == spec["springs"]
    assert spec["final_loss"] < 1e-5
    trace = json.loads((tmp_path / "a" / "loss_trace.json").read_text())
    assert len(trace["global"]) == 8 and trace["per_spring"]

    again = run(cli, "sysid", root / "bar.jsonl", "--config", root / "sysid.json",
                "--seed", 3, "--out", tmp_path / "b")
    assert again.returncode == 0
    assert ((tmp_path / "a" / "twin_spec.json").read_bytes()
            == (tmp_path / "b" / "twin_spec.json").read_bytes())


def test_sysid_uniform_flag(cli, bar_trajectory, tmp_path):
    root = bar_trajectory
    proc = run(cli, "sysid", root / "bar.jsonl", "--config", root / "sysid.json",
               "--uniform-stiffness", "--out", tmp_path)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    spec = json.loads((tmp_path / "twin_spec.json").read_text())
    assert spec["stiffness_mode"] == "uniform"
    assert "spring_stiffness" not in spec
    assert abs(spec["stiffness"] - 500.0) < 75.0


def test_render_writes_png_and_sidecar(cli, assets, tmp_path):
    pil = pytest.importorskip("PIL.Image")
    proc = run(cli, "render", assets / "scenarios" / "push_t_mini.json",
               "--camera", "wrist", "--episode", 2, "--out", tmp_path / "f.png")
    assert proc.returncode == 0, proc.stderr
    assert pil.open(tmp_path / "f.png").size == (96, 72)
    meta = json.loads((tmp_path / "f.png.json").read_text())
    assert meta["episode"] == "ep002" and meta["camera"] == "wrist"
    assert run(cli, "render", assets / "scenarios" / "push_t_mini.json",
               "--episode", 99).returncode == 1
