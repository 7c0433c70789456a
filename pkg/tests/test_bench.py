import json
import math

import numpy as np
import pytest

from wavemix import bench, simgen
from wavemix.errors import CellError, ConfigurationError, StructureError
from wavemix.threshold import ThresholdPolicy


def test_mise_examples():
    mu = simgen.test_function("heavisine", 1024)
    assert bench.mise(mu, mu) == 0.0
    assert bench.mise(mu + 0.3, mu) == pytest.approx(0.09)
    assert bench.mise(np.zeros(1024), mu) == pytest.approx(np.sum(mu**2) / 1024)
    with pytest.raises(StructureError):
        bench.mise(np.zeros(3), np.zeros(4))


def _small_study(reps=3, seed=1, **kw):
    configs = bench.config_grid(
        dict(M=128, N=8, repetitions=reps, seed=seed, **kw),
        test_function=("bumps", "doppler"),
        snr=(1.0, 5.0),
    )
    estimators = [
        bench.Estimator("He", ThresholdPolicy("scad", "hybrid", scale=0.5)),
        bench.Estimator("Ho", ThresholdPolicy("scad", "universal", scale=0.5), "mad"),
        bench.Estimator("avg", strategy="pointwise"),
    ]
    return configs, estimators


def test_report_shape_and_statistics():
    configs, ests = _small_study(reps=4)
    report = bench.run_study(configs, ests, threads=1)
    assert len(report) == len(configs) * len(ests)
    for cell in report:
        assert cell.repetitions == 4
        assert cell.mean == pytest.approx(np.mean(cell.mise))
        assert cell.sd == pytest.approx(np.std(cell.mise, ddof=1))
        assert math.isfinite(cell.mean)
        assert cell.mise[cell.median_repetition] == np.sort(cell.mise)[1]
    one = bench.run_study(configs[:1], ests[:1], threads=1)
    assert one.cells[0].repetitions == 4


def test_single_repetition_has_zero_sd():
    configs, ests = _small_study(reps=1)
    report = bench.run_study(configs[:1], ests[:1])
    assert report.cells[0].sd == 0.0


def test_zero_noise_gives_zero_mise():
    cfg = simgen.SimulationConfig("bumps", M=128, N=4, snr=1e12, tau=math.inf, repetitions=1)
    ests = [bench.Estimator(n, ThresholdPolicy(r, s)) for n, r, s in
            [("a", "soft", "universal"), ("b", "scad", "hybrid"), ("c", "hard", "universal")]]
    report = bench.run_study([cfg], ests)
    for cell in report:
        assert cell.mean < 1e-20


def test_paired_design_shares_panels():
    configs, _ = _small_study(reps=2)
    same = bench.Estimator("x", ThresholdPolicy("soft", "universal"))
    twin = bench.Estimator("y", ThresholdPolicy("soft", "universal"))
    report = bench.run_study(configs, [same, twin])
    for i in range(0, len(report), 2):
        np.testing.assert_array_equal(report.cells[i].mise, report.cells[i + 1].mise)


def test_determinism_across_thread_counts():
    configs, ests = _small_study(reps=5, seed=42)
    csvs = {bench.run_study(configs, ests, threads=t).to_csv() for t in (1, 2, 7)}
    assert len(csvs) == 1


def test_threads_from_environment(monkeypatch):
    monkeypatch.setenv("WAVEMIX_THREADS", "3")
    assert bench.thread_count() == 3
    monkeypatch.setenv("WAVEMIX_THREADS", "0")
    assert bench.thread_count() == 1
    assert bench.thread_count(5) == 5


def test_csv_and_json_round_trip():
    configs, ests = _small_study(reps=2, tau=math.inf)
    report = bench.run_study(configs, ests)
    lines = report.to_csv().splitlines()
    assert lines[0].split(",") == list(bench.CSV_FIELDS)
    assert len(lines) == 1 + len(report)
    first = dict(zip(lines[0].split(","), lines[1].split(",")))
    assert first["tau"] == "inf"
    assert float(first["mean_mise"]) == report.cells[0].mean
    doc = json.loads(report.to_json())
    assert doc["version"] == 1
    assert "wall_time" in doc["cells"][0]
    assert doc["cells"][0]["mise"] == list(report.cells[0].mise)
    assert "wall_time" not in report.to_csv()


def test_format_table_uses_display_units():
    configs, ests = _small_study(reps=2)
    text = bench.run_study(configs, ests).format_table()
    assert "x1e-04" in text  # doppler rows
    assert "bumps" in text


def test_traces_hold_median_realization(tmp_path):
    configs, ests = _small_study(reps=3)
    report = bench.run_study(configs[:1], ests[:1], keep_traces=True)
    paths = report.write_traces(str(tmp_path))
    cell = report.cells[0]
    data = np.loadtxt(paths[0], delimiter=",", skiprows=2)
    assert data.shape == (128, 3)
    assert bench.mise(data[:, 2], data[:, 1]) == pytest.approx(cell.mise[cell.median_repetition])
    bare = bench.run_study(configs[:1], ests[:1])
    with pytest.raises(StructureError):
        bare.write_traces(str(tmp_path / "x"))


def test_cell_failure_names_the_cell():
    cfg = simgen.SimulationConfig("bumps", M=64, N=1, repetitions=1)
    with pytest.raises(CellError, match="bumps") as info:
        bench.run_study([cfg], [bench.Estimator("He", ThresholdPolicy())])
    assert "He" in str(info.value)
    bad = simgen.SimulationConfig("bumps", M=64, zero_tol=0.0, repetitions=1)
    with pytest.raises(CellError, match="#0 bumps"):
        bench.run_study([bad], [bench.Estimator("Ho", ThresholdPolicy(), "mad")])


def test_empty_and_duplicate_inputs():
    configs, ests = _small_study()
    with pytest.raises(ConfigurationError):
        bench.run_study([], ests)
    with pytest.raises(ConfigurationError):
        bench.run_study(configs, [])
    with pytest.raises(ConfigurationError):
        bench.run_study(configs, [ests[0], ests[0]])


def test_find_and_get():
    configs, ests = _small_study(reps=1)
    report = bench.run_study(configs, ests)
    assert len(report.find(test_function="bumps")) == 6
    cell = report.get(test_function="doppler", snr=5.0, estimator="Ho")
    assert cell.config.snr == 5.0
    with pytest.raises(KeyError):
        report.get(test_function="doppler")


def test_presets_have_expected_grids():
    c1, e1 = bench.heteroscedasticity_study(repetitions=2)
    assert len(c1) == 16 and [e.name for e in e1] == ["He", "Ho"]
    assert all(e.policy.scale == 0.5 and e.policy.rule.kind == "scad" for e in e1)
    c2, _ = bench.homoscedastic_study(repetitions=2)
    assert all(math.isinf(c.tau) for c in c2)
    c3, e3 = bench.selector_study(repetitions=2)
    assert len(c3) == 24 and len(e3) == 4
    assert {c.structure for c in c3} == {"bernoulli"}


# -- study plan parsing ------------------------------------------------------

def _plan(**over):
    doc = {
        "version": 1,
        "seed": 7,
        "repetitions": 2,
        "grid": {"test_function": ["blocks", "bumps"], "snr": [1, 5], "tau": [0.1, "inf"], "M": 64, "N": 4},
        "estimators": [
            {"name": "He", "rule": "scad", "selector": "universal", "scale": 0.5, "variance": "het"},
            {"name": "Ho", "rule": "scad", "variance": "mad"},
        ],
    }
    doc.update(over)
    return doc


def test_plan_expands_grid():
    configs, ests = bench.parse_study_plan(_plan())
    assert len(configs) == 8
    assert sum(math.isinf(c.tau) for c in configs) == 4
    assert all(c.seed == 7 and c.repetitions == 2 and c.M == 64 for c in configs)
    assert ests[1].variance_mode == "homoscedastic"


@pytest.mark.parametrize(
    "override,field",
    [
        ({"version": 2}, "version"),
        ({"grid": {}}, "grid"),
        ({"grid": {"snr": []}}, "grid.snr"),
        ({"grid": {"colour": [1]}}, "grid"),
        ({"grid": {"M": [1000]}}, "grid"),
        ({"grid": {"tau": ["lots"]}}, "grid.tau"),
        ({"estimators": []}, "estimators"),
        ({"estimators": [{"name": "x", "rule": "garrote"}]}, "estimators[0].rule"),
        ({"estimators": [{"name": "x", "selector": "cv"}]}, "estimators[0]"),
        ({"estimators": [{"name": "x", "variance": "robust"}]}, "estimators[0]"),
        ({"estimators": [{"name": "x"}, {"name": "x"}]}, "estimators"),
        ({"repetitions": "many"}, "repetitions"),
        ({"extra": 1}, "top-level"),
    ],
)
def test_plan_errors_name_the_field(override, field):
    with pytest.raises(ConfigurationError, match=field.replace("[", r"\[").replace("]", r"\]")):
        bench.parse_study_plan(_plan(**override))
