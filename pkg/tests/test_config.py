from pathlib import Path

import pytest

from curate.config import ConfigError, fingerprint, load_config, parse_config
from curate.textnorm import DEFAULT_CHAR_MAP
from curate.vad import TrimMode, VadConfig

BASE = """[pipeline]
input_catalog = data/validated.tsv
audio_root = data/clips
output_dir = out
"""


def test_minimal_defaults(tmp_path):
    cfg = parse_config(BASE, tmp_path)
    assert cfg.input_catalog == (tmp_path / "data/validated.tsv").resolve()
    assert cfg.work_dir == (tmp_path / "out").resolve().parent / "work"
    assert cfg.target_sample_rate == 22050
    assert cfg.quality.threshold == 3.5 and not cfg.quality.inclusive
    assert cfg.intonation.k == 6 and cfg.intonation.min_clips == 50
    assert cfg.split.val_permille == 100
    assert cfg.vad == VadConfig()
    assert dict(cfg.textnorm.char_map) == DEFAULT_CHAR_MAP


def test_sections_parsed(tmp_path):
    text = BASE + """delimiter = comma
ages = twenties, thirties
workers = 3

[vad]
mode = concatenate
margin_db = 8
reject_short = no

[quality]
threshold = 3.0
inclusive = true
weights = 0.5, 0.3, 0.2
external_command = python3 score.py --fast

[textnorm.char_map]
ɛ = e
« = "
"""
    cfg = parse_config(text, tmp_path)
    assert cfg.delimiter == "," and cfg.ages == ("twenties", "thirties") and cfg.workers == 3
    assert cfg.vad.mode is TrimMode.CONCATENATE and cfg.vad.margin_db == 8.0 and not cfg.vad.reject_short
    assert cfg.quality.weights == (0.5, 0.3, 0.2) and cfg.quality.inclusive
    assert cfg.quality.external_command == "python3 score.py --fast"
    assert cfg.textnorm.char_map["ɛ"] == "e" and cfg.textnorm.char_map["«"] == '"'
    assert cfg.textnorm.char_map["ŋ"] == "ng"


@pytest.mark.parametrize(
    "extra",
    [
        "[vad]\nmargn_db = 3\n",
        "[nonsense]\na = 1\n",
        "[vad]\nmargin_db = loud\n",
        "[quality]\nthreshold = 9\n",
        "[split]\nval_permille = 2000\n",
        "[vad]\nmode = sideways\n",
        "[pipeline]\nworkers = 2\n",
        "[textnorm.char_map]\nŋ = ŋŋ\n",
        "[pipeline]\nfoo = 1\n",
    ],
)
def test_rejects_bad_config(tmp_path, extra):
    with pytest.raises(ConfigError):
        parse_config(BASE + "\n" + extra, tmp_path)


def test_missing_required(tmp_path):
    with pytest.raises(ConfigError):
        parse_config("[pipeline]\ninput_catalog = a\naudio_root = b\n", tmp_path)
    with pytest.raises(ConfigError):
        parse_config("[vad]\nmargin_db = 1\n", tmp_path)
    with pytest.raises(ConfigError):
        parse_config("not an ini", tmp_path)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")
    p = tmp_path / "c.ini"
    p.write_text(BASE)
    assert load_config(p).output_dir == (tmp_path / "out").resolve()


def test_fingerprint_stable_and_sensitive(tmp_path):
    a = parse_config(BASE, tmp_path)
    b = parse_config(BASE, tmp_path)
    assert fingerprint(a.vad, a.enhance) == fingerprint(b.vad, b.enhance)
    c = parse_config(BASE + "[vad]\nmargin_db = 7\n", tmp_path)
    assert fingerprint(a.vad) != fingerprint(c.vad)
    assert isinstance(a.to_dict()["input_catalog"], str)
    assert Path(a.to_dict()["work_dir"]).name == "work"
