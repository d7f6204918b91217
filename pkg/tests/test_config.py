"""Run configuration: flat file format, validation and overrides."""
import pytest

from app.config.settings import (
    ConfigError,
    RunConfig,
    Settings,
    settings,
    TrainingMode,
    apply_overrides,
    dump_config,
    load_config,
    parse_config,
    write_config,
)
from app.services.encoders.models import EncoderKind
from app.services.evaluation.scoring import EvalFormat, Scale


class TestDefaults:

    def test_run_config_defaults(self):
        config = RunConfig()
        assert (config.seed, config.mode) == (0, TrainingMode.SL)
        assert (config.task.scale, config.task.eval_format) == (Scale.THREE, EvalFormat.CV3)
        assert (config.text.n_max, config.text.pair_distance, config.text.d_feat) == (50, 10, 5)
        assert config.text.negation_particles == ["не", "not"]
        assert (config.encoder.kind, config.encoder.filter_count, config.encoder.keep_prob) == (EncoderKind.CNN, 300, 0.8)
        assert config.analysis.ranges()["prep"] == (0.0, 0.2)

    def test_missing_file_argument_gives_defaults(self):
        assert load_config(None) == RunConfig()

    def test_settings_from_environment(self, monkeypatch):
        monkeypatch.setenv("SAE_LOG_LEVEL", "DEBUG")
        monkeypatch.setenv("SAE_OUTPUT_DIR", "/tmp/sae-runs")
        current = Settings()
        assert current.log_level == "DEBUG"
        assert str(current.output_path) == "/tmp/sae-runs"

    def test_output_directory_setting_gives_the_default_run_directory(self, monkeypatch, tmp_path):
        monkeypatch.setattr(settings, "output_dir", str(tmp_path))
        assert RunConfig().paths.out == tmp_path / "default"


class TestFileFormat:

    def test_written_config_loads_back_equal(self, tmp_path):
        config = parse_config({
            "SEED": "7",
            "TASK__SCALE": "two",
            "TASK__EVAL_FORMAT": "fixed",
            "ENCODER__KIND": "att-bilstm",
            "ENCODER__CLASS_COUNT": "2",
            "ENCODER__BILSTM_MERGE": "sum",
            "TRAIN__MAX_EPOCHS": "20",
            "TRAIN__STOP_F1_SCOPE": "main",
            "TEXT__NEGATION_PARTICLES": "not, never",
            "PATHS__CORPUS": str(tmp_path / "corpus.jsonl"),
            "ANALYSIS__BANDWIDTH": "0.05",
            "ANALYSIS__NOUNS": "0.1,0.3",
        })
        path = tmp_path / "run.env"
        write_config(config, path)
        assert load_config(path) == config
        assert "ENCODER__KIND=att-bilstm" in path.read_text(encoding="utf-8").splitlines()

    def test_empty_list_survives_writing(self, tmp_path):
        config = RunConfig.model_validate({"text": {"negation_particles": []}})
        path = tmp_path / "run.env"
        write_config(config, path)
        assert "TEXT__NEGATION_PARTICLES=" in path.read_text(encoding="utf-8").splitlines()
        assert load_config(path).text.negation_particles == []
        assert load_config(path) == config

    def test_dump_leaves_out_unset_values(self):
        text = dump_config(RunConfig())
        assert "PATHS__CORPUS" not in text
        assert "ANALYSIS__BANDWIDTH" not in text
        assert "SEED=0" in text.splitlines()

    def test_empty_values_are_ignored(self):
        assert parse_config({"SEED": "", "MODE": None}) == RunConfig()

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigError, match="does not exist"):
            load_config(tmp_path / "absent.env")


class TestValidation:

    def test_every_problem_is_reported(self):
        with pytest.raises(ConfigError) as info:
            parse_config({"FOO__BAR": "1", "TRAIN__MAX_EPOCHS": "0", "TEXT__N_MAX": "many", "TRAIN__SPEED": "1"})
        problems = info.value.problems
        assert "FOO__BAR: unknown key" in problems
        for key in ("TRAIN__MAX_EPOCHS", "TEXT__N_MAX", "TRAIN__SPEED"):
            assert any(p.startswith(f"{key}:") for p in problems), key

    def test_nested_key_too_deep(self):
        with pytest.raises(ConfigError, match="TEXT__N__MAX: unknown key"):
            parse_config({"TEXT__N__MAX": "5"})

    def test_distant_supervision_needs_a_corpus(self):
        with pytest.raises(ConfigError, match="PATHS__DS_CORPUS"):
            parse_config({"MODE": "ds"})
        assert parse_config({"MODE": "ds", "PATHS__DS_CORPUS": "ds.jsonl"}).mode is TrainingMode.DS

    def test_class_count_follows_the_scale(self):
        with pytest.raises(ConfigError, match="ENCODER__CLASS_COUNT=3"):
            parse_config({"TASK__SCALE": "two"})
        assert parse_config({"TASK__SCALE": "two", "ENCODER__CLASS_COUNT": "2"}).encoder.class_count == 2

    def test_pair_distance_below_window(self):
        with pytest.raises(ConfigError, match="pair_distance"):
            parse_config({"TEXT__N_MAX": "10", "TEXT__PAIR_DISTANCE": "10"})

    def test_analysis_range_order(self):
        with pytest.raises(ConfigError, match="ANALYSIS__FRAMES"):
            parse_config({"ANALYSIS__FRAMES": "0.4,0.1"})

    def test_required_paths_are_checked_together(self, tmp_path):
        existing = tmp_path / "frames.jsonl"
        existing.write_text("", encoding="utf-8")
        config = parse_config({"PATHS__FRAMES": str(existing), "PATHS__NEWS": str(tmp_path / "news.jsonl")})
        config.require_paths("frames")
        with pytest.raises(ConfigError) as info:
            config.require_paths("frames", "news", "corpus")
        assert len(info.value.problems) == 2
        assert info.value.problems[1] == "PATHS__CORPUS is not set"


class TestOverrides:

    def test_flags_take_precedence(self, tmp_path):
        config = apply_overrides(parse_config({"SEED": "3"}), seed=11, out=tmp_path)
        assert config.seed == 11
        assert config.paths.out == tmp_path

    def test_overrides_are_revalidated(self):
        with pytest.raises(ConfigError):
            apply_overrides(RunConfig(), mode="ds")

    def test_no_flags_keep_the_file_values(self):
        config = parse_config({"SEED": "3", "ENCODER__KIND": "pcnn"})
        assert apply_overrides(config) == config
