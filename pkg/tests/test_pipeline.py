# tests/test_pipeline.py
"""
End-to-end tests of the command line: gen-data, train, eval, report, inspect.
"""
import json

import pandas as pd
import pytest

from app import main

CONFIG = {
    "generation": {"n_objects": 6, "per_object_min": 3, "per_object_max": 4, "max_skip_rate": 1.0},
    "policy": {
        "obs_horizon": 2, "pred_horizon": 4, "action_horizon": 2, "diffusion_steps": 10,
        "instruction_proj_dim": 8, "time_embed_dim": 8, "hidden": [16, 16], "batch_size": 8, "log_every": 10,
    },
    "eval": {"trials_per_object": 1, "mushiness_trials": 2},
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Runs every stage once on a tiny configuration."""
    root = tmp_path_factory.mktemp("pipeline")
    config = root / "config.json"
    config.write_text(json.dumps(CONFIG))
    common = ["--config", str(config), "--jobs", "1"]

    codes = {}
    codes["gen-data"] = main(["gen-data", *common, "--seed", "11", "--out", str(root / "data")])
    for variant in ("forceful", "position-only"):
        codes[f"train {variant}"] = main([
            "train", *common, "--seed", "11", "--dataset", str(root / "data"),
            "--variant", variant, "--out", str(root / "models"), "--steps", "20",
        ])
    codes["eval forceful"] = main([
        "eval", *common, "--checkpoint", str(root / "models" / "forceful.ckpt"),
        "--dataset", str(root / "data"), "--out", str(root / "eval"),
    ])
    codes["eval position-only"] = main([
        "eval", *common, "--variant", "position-only",
        "--checkpoint", str(root / "models" / "position_only.ckpt"), "--out", str(root / "eval"),
    ])
    codes["report"] = main([
        "report", "--reports", str(root / "eval" / "eval_forceful.json"),
        str(root / "eval" / "eval_position_only.json"), "--out", str(root / "report"),
    ])
    return root, config, codes


class TestStages:
    """The full chain on a tiny configuration."""

    def test_every_stage_succeeds(self, workspace):
        """Each command exits 0."""
        _, _, codes = workspace
        assert codes == {name: 0 for name in codes}

    def test_gen_data_outputs(self, workspace):
        """Catalog, episodes and manifest are written."""
        root, _, _ = workspace
        data = root / "data"
        manifest = json.loads((data / "manifest.json").read_text())
        assert manifest["seed"] == 11
        assert len(manifest["objects"]) == 6
        catalog = json.loads((data / "catalog.json").read_text())
        assert catalog
        assert (data / "episodes.jsonl").read_text().count("\n") > manifest["episodes"]

    def test_train_outputs(self, workspace):
        """Checkpoint, sidecars, loss trace and training record are written."""
        root, _, _ = workspace
        models = root / "models"
        for tag in ("forceful", "position_only"):
            assert (models / f"{tag}.ckpt").exists()
            assert (models / f"{tag}.ckpt.policy.json").exists()
            losses = pd.read_csv(models / f"{tag}_loss.csv")
            assert list(losses.columns) == ["step", "loss"]
            assert len(losses) == 20
            record = json.loads((models / f"{tag}.ckpt.train.json").read_text())
            assert record["variant"] == tag
            assert record["steps"] == 20

    def test_eval_outputs(self, workspace):
        """Reports cover all ten evaluation objects."""
        root, _, _ = workspace
        report = json.loads((root / "eval" / "eval_forceful.json").read_text())
        assert report["variant"] == "forceful"
        assert len(report["objects"]) == 10
        assert len(report["trials"]) == 10
        assert all(len(t["trace"]) == 15 for t in report["trials"])

    def test_report_outputs(self, workspace):
        """Tables, plots and text are written for the pair."""
        root, _, _ = workspace
        out = root / "report"
        for name in ("trials.csv", "summary.csv", "traces.csv", "compression.csv", "report.txt"):
            assert (out / name).exists()
        assert len(list((out / "plots").glob("*.svg"))) == 10
        text = (out / "report.txt").read_text()
        assert "Policy: forceful" in text and "Policy: position_only" in text
        assert "Delicate stratum gap" in text


class TestConfigFile:
    """The shipped configuration."""

    def test_default_config_matches_defaults(self):
        """configs/default.json restates every dataclass default."""
        from pathlib import Path
        from src.agents.diffusion_agent import PolicyConfig
        from src.agents.expert_agent import ControllerGains, ExpertConfig, GenerationConfig
        from src.core.physics import SimConfig
        from src.evaluation.harness import EvalConfig
        from src.pipeline import RunConfig

        path = Path(__file__).resolve().parent.parent / "configs" / "default.json"
        run = RunConfig("gen-data", config_path=path)
        assert run.sim() == SimConfig()
        assert run.gains() == ControllerGains()
        assert run.expert_config() == ExpertConfig()
        assert run.generation() == GenerationConfig()
        assert run.policy() == PolicyConfig()
        assert run.evaluation() == EvalConfig()

    def test_steps_override(self):
        """--steps wins over the file."""
        from src.pipeline import RunConfig
        run = RunConfig("train", steps=7, sections={"policy": {"train_steps": 50}})
        assert run.policy().train_steps == 7


class TestDeterminism:
    """Identical inputs and seeds give identical outputs."""

    def test_rerun_matches(self, workspace, tmp_path):
        """Dataset bytes, loss trace and report JSON repeat exactly."""
        root, config, _ = workspace
        common = ["--config", str(config), "--jobs", "1"]
        assert main(["gen-data", *common, "--seed", "11", "--out", str(tmp_path / "data")]) == 0
        for name in ("episodes.jsonl", "catalog.json", "manifest.json"):
            assert (tmp_path / "data" / name).read_bytes() == (root / "data" / name).read_bytes()

        assert main(["train", *common, "--seed", "11", "--dataset", str(tmp_path / "data"),
                     "--out", str(tmp_path / "models"), "--steps", "20"]) == 0
        assert (tmp_path / "models" / "forceful_loss.csv").read_bytes() == \
            (root / "models" / "forceful_loss.csv").read_bytes()

        assert main(["eval", *common, "--checkpoint", str(tmp_path / "models" / "forceful.ckpt"),
                     "--out", str(tmp_path / "eval")]) == 0
        assert json.loads((tmp_path / "eval" / "eval_forceful.json").read_text()) == \
            json.loads((root / "eval" / "eval_forceful.json").read_text())


class TestInspect:
    """Inspecting datasets and checkpoints."""

    def test_dataset(self, workspace, capsys):
        """A gen-data directory prints counts and the mass range."""
        root, _, _ = workspace
        capsys.readouterr()
        assert main(["inspect", str(root / "data")]) == 0
        out = capsys.readouterr().out
        assert out.startswith("Dataset")
        assert "subtasks" in out
        assert "mass range" in out

    def test_checkpoint(self, workspace, capsys):
        """A checkpoint prints its tensors and training record."""
        root, _, _ = workspace
        capsys.readouterr()
        assert main(["inspect", str(root / "models" / "forceful.ckpt")]) == 0
        out = capsys.readouterr().out
        assert out.startswith("Checkpoint")
        assert "variant forceful" in out
        assert "parameters:" in out
        assert "trained on" in out


class TestRefusals:
    """Inputs the pipeline refuses."""

    def test_variant_mismatch(self, workspace, tmp_path):
        """Evaluating a forceful checkpoint as position-only exits 2."""
        root, config, _ = workspace
        code = main([
            "eval", "--config", str(config), "--variant", "position-only",
            "--checkpoint", str(root / "models" / "forceful.ckpt"), "--out", str(tmp_path),
        ])
        assert code == 2

    def test_dataset_mismatch(self, workspace, tmp_path):
        """Evaluating against a corpus the policy was not trained on exits 2."""
        from src.core.dataset import read_episodes, write_episodes
        root, config, _ = workspace
        other = tmp_path / "other.jsonl"
        write_episodes(read_episodes(root / "data" / "episodes.jsonl")[:2], other)
        code = main([
            "eval", "--config", str(config), "--checkpoint", str(root / "models" / "forceful.ckpt"),
            "--dataset", str(other), "--out", str(tmp_path),
        ])
        assert code == 2

    def test_unpaired_reports(self, workspace, tmp_path):
        """Reports from different seeds cannot be compared."""
        root, config, _ = workspace
        assert main([
            "eval", "--config", str(config), "--seed", "5", "--variant", "position-only",
            "--checkpoint", str(root / "models" / "position_only.ckpt"), "--out", str(tmp_path),
        ]) == 0
        code = main([
            "report", "--reports", str(root / "eval" / "eval_forceful.json"),
            str(tmp_path / "eval_position_only.json"), "--out", str(tmp_path / "report"),
        ])
        assert code == 2

    def test_malformed_sidecar(self, workspace, tmp_path):
        """A sidecar missing its variant exits 2 instead of crashing."""
        import shutil
        root, config, _ = workspace
        for path in (root / "models").glob("forceful.ckpt*"):
            shutil.copy(path, tmp_path / path.name)
        side = tmp_path / "forceful.ckpt.policy.json"
        meta = json.loads(side.read_text())
        del meta["variant"]
        side.write_text(json.dumps(meta))
        code = main([
            "eval", "--config", str(config), "--checkpoint", str(tmp_path / "forceful.ckpt"),
            "--out", str(tmp_path / "eval"),
        ])
        assert code == 2

    def test_missing_input(self, tmp_path):
        """A missing dataset is a validation failure."""
        assert main(["train", "--dataset", str(tmp_path / "nope"), "--out", str(tmp_path)]) == 2

    def test_unknown_config_key(self, tmp_path):
        """Unknown keys inside a section are rejected."""
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"sim": {"gravity": 9.81, "wind": 3.0}}))
        assert main(["gen-data", "--config", str(config), "--out", str(tmp_path)]) == 2

    def test_unknown_config_section(self, tmp_path):
        """Unknown sections are rejected before anything runs."""
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"camera": {}}))
        assert main(["gen-data", "--config", str(config), "--out", str(tmp_path)]) == 2

    def test_bad_jobs(self, tmp_path):
        """Zero workers is a validation failure."""
        assert main(["gen-data", "--jobs", "0", "--out", str(tmp_path)]) == 2

    def test_unknown_command(self):
        """argparse rejects unknown commands."""
        with pytest.raises(SystemExit):
            main(["fly"])

    def test_skip_rate_exit(self, tmp_path, monkeypatch):
        """Too many infeasible objects exits 3 after writing the corpus."""
        import src.pipeline as pipeline
        real = pipeline.generate_demonstrations

        def with_infeasible(*args, **kwargs):
            episodes, manifest = real(*args, **kwargs)
            manifest.objects.extend({"name": f"parcel {i}", "infeasible": True} for i in range(6))
            return episodes, manifest

        monkeypatch.setattr(pipeline, "generate_demonstrations", with_infeasible)
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"generation": CONFIG["generation"] | {"max_skip_rate": 0.2}}))
        code = main(["gen-data", "--config", str(config), "--seed", "11", "--out", str(tmp_path / "data")])
        assert code == 3
        assert (tmp_path / "data" / "episodes.jsonl").exists()


@pytest.mark.slow
class TestForceAwareness:
    """Full-size training and evaluation of both variants."""

    def test_forceful_beats_position_only_on_delicate_objects(self, tmp_path):
        """Force feedback lifts delicate success by 15 points, closes less far and leaves less damage."""
        from src.evaluation.harness import EvalReport
        from src.evaluation.report import compression_comparison, delicate_gap

        assert main(["gen-data", "--out", str(tmp_path / "data")]) == 0
        for variant, tag in (("forceful", "forceful"), ("position-only", "position_only")):
            assert main(["train", "--dataset", str(tmp_path / "data"), "--variant", variant,
                         "--out", str(tmp_path / "models")]) == 0
            assert main(["eval", "--variant", variant, "--checkpoint", str(tmp_path / "models" / f"{tag}.ckpt"),
                         "--out", str(tmp_path / "eval")]) == 0
        forceful = EvalReport.load(tmp_path / "eval" / "eval_forceful.json")
        position_only = EvalReport.load(tmp_path / "eval" / "eval_position_only.json")
        assert delicate_gap(forceful, position_only) >= 15.0
        comparison = compression_comparison(forceful, position_only)
        assert comparison.delicate_share_closing_narrower() >= 0.8

        soft = {m.object_name: m.total_degradation for m in forceful.mushiness}
        squeezed = {m.object_name: m.total_degradation for m in position_only.mushiness}
        assert set(soft) == set(squeezed)
        assert squeezed["tomato"] >= soft["tomato"]
        assert sum(squeezed.values()) >= sum(soft.values())
