import numpy as np
import pytest

from cavityflow.config import CaseConfig, ConfigError, parse_config


def write(tmp_path, text):
    path = tmp_path / "case.ini"
    path.write_text(text)
    return path


def test_minimal_config_defaults(tmp_path):
    cfg = parse_config(write(tmp_path, "[case]\nra = 1e4\npr = 100\nn = 1\n"))
    assert cfg.ra == 1e4 and cfg.pr == 100 and cfg.n == 1
    assert cfg.k == 3 and cfg.m == 2 and cfg.c == 2
    assert cfg.density == "constant" and cfg.h == 0.02
    assert cfg.t_end == 0.1 and cfg.dt is None
    assert cfg.stencil_size == 12


def test_unknown_key_reports_line(tmp_path):
    path = write(tmp_path, "[case]\nra = 1e4\nbogus = 3\n")
    with pytest.raises(ConfigError) as err:
        parse_config(path)
    assert err.value.line == 3
    assert "bogus" in str(err.value)


def test_out_of_range_value_reports_line(tmp_path):
    path = write(tmp_path, "[case]\nra = 1e4\npr = 100\nn = 0\n")
    with pytest.raises(ConfigError) as err:
        parse_config(path)
    assert err.value.line == 4


def test_unknown_section_rejected(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(write(tmp_path, "[nonsense]\nx = 1\n"))


def test_unparseable_value(tmp_path):
    with pytest.raises(ConfigError) as err:
        parse_config(write(tmp_path, "[case]\nra = fast\n"))
    assert err.value.line == 2


def test_refined_case_file(tmp_path):
    text = """
[case]
ra = 1e6
pr = 100
n = 0.6

[discretisation]
density = boundary_refined
h1 = 0.005
h2 = 0.025
w = 0.025

[time]
dt = auto
t_end = 0.1
"""
    cfg = parse_config(write(tmp_path, text))
    df = cfg.density_field()
    assert df.kind == "boundary_refined"
    assert df.h1 == 0.005 and df.h2 == 0.025 and df.w == 0.025
    assert cfg.dt is None


def test_obstructions_and_gravity(tmp_path):
    text = """
[case]
ra = 1e6
pr = 100
n = 0.6
obstructions = 0.4,0.5,0.1; 0.6,0.5,0.08
gravity = -y
"""
    cfg = parse_config(write(tmp_path, text))
    assert len(cfg.obstructions) == 2
    assert cfg.obstructions[1] == ((0.6, 0.5), 0.08)
    assert np.allclose(cfg.gravity_direction(), [0, -1])
    dom = cfg.domain()
    assert len(dom.obstructions) == 2


def test_gravity_none_and_vector():
    cfg = CaseConfig(gravity="none")
    assert np.all(cfg.gravity_direction() == 0.0)
    cfg = CaseConfig(gravity="0.6,-0.8")
    assert np.allclose(cfg.gravity_direction(), [0.6, -0.8])


def test_fixed_dt(tmp_path):
    cfg = parse_config(write(tmp_path, "[case]\nra = 1\npr = 1\nn = 1\n[time]\ndt = 1e-6\n"))
    assert cfg.dt == 1e-6


def test_invalid_direct_construction():
    with pytest.raises(ConfigError):
        CaseConfig(n=0.0)
    with pytest.raises(ConfigError):
        CaseConfig(ra=-1)
    with pytest.raises(ConfigError):
        CaseConfig(density="weird")
    with pytest.raises(ConfigError):
        CaseConfig(viscosity_convention="other")


def test_hash_changes_iff_config_changes():
    base = CaseConfig(ra=1e4, pr=100, n=1.0)
    same = CaseConfig(ra=1e4, pr=100, n=1.0)
    assert base.content_hash() == same.content_hash()
    seen = {base.content_hash()}
    for variant in (
        CaseConfig(ra=2e4, pr=100, n=1.0),
        CaseConfig(ra=1e4, pr=100, n=0.9),
        CaseConfig(ra=1e4, pr=100, n=1.0, h=0.03),
        CaseConfig(ra=1e4, pr=100, n=1.0, seed=1),
        CaseConfig(ra=1e4, pr=100, n=1.0, c=3),
    ):
        digest = variant.content_hash()
        assert digest not in seen
        seen.add(digest)


def test_wall_faces_defaults():
    assert CaseConfig(dim=2).wall_faces() == ("x-", "x+")
    assert CaseConfig(dim=3).wall_faces() == ("z+", "z-")
    with pytest.raises(ValueError):
        CaseConfig(dim=2, cold_wall="x-", hot_wall="x-").wall_faces()
