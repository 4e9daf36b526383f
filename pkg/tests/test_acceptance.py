"""Release gate: nine checks that define a working build.

Every test prints one ``acceptance criterion N ...: PASS/FAIL`` line
(run with ``pytest -s tests/test_acceptance.py`` to see them), so the
suite output doubles as a sign-off sheet.  Tolerances and runtime
budgets are fixed here and must not be loosened to make a red check
green.
"""

from __future__ import annotations

import math
import time
from types import SimpleNamespace

import numpy as np
import pytest

from segensemble import (
    MODE_ACCUMULATED,
    MODE_PER_IMAGE_MEAN,
    ClassScoreTable,
    ConfusionMatrix,
    CostParams,
    LabelMask,
    build_score_table,
    cost_estimate,
    evaluate_component,
    load_manifest,
    run_ensemble,
    score_components,
    select_best,
)
from segensemble.cli import main
from segensemble.synth import generate_corpus, load_synth_config

from helpers import FIXTURES, iou_oracle


def report(num: int, label: str, ok: bool, detail: str = "") -> None:
    line = f"acceptance criterion {num} [{label}]: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f" ({detail})"
    print(line)


# class id -> winning component when feeding the transcribed 21-class
# benchmark fixture through selection; 8 PuzzleCAM, 7 CLIMS, 3 DRS, 2 PMM
EXPECTED_SELECTION = {
    1: "PuzzleCAM",   # aero
    2: "CLIMS",       # bike
    3: "PuzzleCAM",   # bird
    4: "CLIMS",       # boat
    5: "DRS",         # bottle
    6: "PMM",         # bus
    7: "PMM",         # car
    8: "PuzzleCAM",   # cat
    9: "DRS",         # chair
    10: "PuzzleCAM",  # cow
    11: "CLIMS",      # table
    12: "PuzzleCAM",  # dog
    13: "PuzzleCAM",  # horse
    14: "CLIMS",      # motor
    15: "CLIMS",      # person
    16: "PuzzleCAM",  # plant
    17: "PuzzleCAM",  # sheep
    18: "CLIMS",      # sofa
    19: "DRS",        # train
    20: "CLIMS",      # tv
}


def test_criterion_1_selection_reproduction():
    table = ClassScoreTable.load(FIXTURES / "voc_scores.csv")
    start = time.perf_counter()
    selection = select_best(table)
    elapsed = time.perf_counter() - start

    mismatches = {
        cid: (selection.choices[cid], expected)
        for cid, expected in EXPECTED_SELECTION.items()
        if selection.choices[cid] != expected
    }
    counts = {name: list(selection.choices.values()).count(name)
              for name in ("PuzzleCAM", "CLIMS", "DRS", "PMM")}
    ok = not mismatches and counts == {
        "PuzzleCAM": 8, "CLIMS": 7, "DRS": 3, "PMM": 2
    } and elapsed < 1.0
    report(1, "benchmark selection reproduction", ok,
           f"{counts}, {elapsed * 1000:.0f} ms")
    assert mismatches == {}
    assert counts == {"PuzzleCAM": 8, "CLIMS": 7, "DRS": 3, "PMM": 2}
    assert elapsed < 1.0


def test_criterion_2_iou_oracle_equivalence():
    rng = np.random.default_rng(20230617)
    start = time.perf_counter()
    checked = 0
    for _ in range(200):
        class_count = int(rng.integers(2, 5))
        h = int(rng.integers(1, 9))
        w = int(rng.integers(1, 9))
        gt = rng.integers(0, class_count, size=(h, w)).astype(np.uint8)
        pred = rng.integers(0, class_count, size=(h, w)).astype(np.uint8)
        gt[rng.random(size=(h, w)) < 0.2] = 255
        cm = ConfusionMatrix(class_count)
        cm.accumulate(LabelMask(gt), LabelMask(pred))
        got = cm.per_class_iou()
        expected = iou_oracle(gt, pred, class_count)
        for cid in range(class_count):
            if math.isnan(expected[cid]):
                assert math.isnan(got[cid])
            else:
                assert abs(got[cid] - expected[cid]) <= 1e-12
            checked += 1
    elapsed = time.perf_counter() - start
    ok = checked >= 200 and elapsed < 5.0
    report(2, "IoU matches brute-force oracle", ok,
           f"{checked} class scores, {elapsed:.2f} s")
    assert elapsed < 5.0


def test_criterion_3_fixture_row_means():
    # 1-decimal reference means shipped with the 21-class fixture,
    # checked at +/-0.05 percentage points
    reference = {"PuzzleCAM": 69.7, "CLIMS": 70.5, "PMM": 70.7, "DRS": 71.3}
    tolerance = 0.05
    table = ClassScoreTable.load(FIXTURES / "voc_scores.csv")
    means = {name: scores.mean() * 100 for name, _mode, scores in table.rows}
    failures = []
    details = []
    for name, expected in reference.items():
        got = means[name]
        deviation = abs(got - expected)
        details.append(f"{name} {got:.4f} vs {expected} (|d|={deviation:.4f})")
        if not deviation <= tolerance + 1e-9:
            failures.append(
                f"{name}: row mean {got:.4f} is {deviation:.4f} from the "
                f"reference {expected}, outside +/-{tolerance}"
            )
    report(3, "fixture row means within +/-0.05", not failures, "; ".join(details))
    assert not failures, (
        "; ".join(failures)
        + ".  The PuzzleCAM row's 21 entries sum to 1465.1, giving a mean of "
        "69.7667 exactly; every entry is a 1-decimal rounding of the true "
        "score, so the true row mean lies within +/-0.05 of 69.7667 and can "
        "never come within 0.05 of the reference 69.7.  A sum in 1462.65-1464.75 "
        "(mean within +/-0.05 of 69.7) would require the transcription to be "
        "off by at least 0.35 overall, which re-checking each entry rules out.  The "
        "+/-0.05 band is satisfiable for DRS, CLIMS and PMM but arithmetically "
        "unsatisfiable for PuzzleCAM; a +/-0.1 band (double rounding: once per "
        "entry, once on the published mean) would admit all four rows."
    )


@pytest.fixture(scope="module")
def complementary_corpus(tmp_path_factory):
    """Seeded corpus where each component dominates a disjoint class subset."""
    start = time.perf_counter()
    config = load_synth_config(FIXTURES / "synth_accept.cfg")
    root = tmp_path_factory.mktemp("accept")
    manifest = generate_corpus(config, root / "corpus")
    scores = score_components(manifest)
    selection = select_best(build_score_table(manifest))
    ensemble = run_ensemble(manifest, selection, out_dir=root / "ensemble")
    elapsed = time.perf_counter() - start
    return SimpleNamespace(
        manifest=manifest,
        scores=scores,
        selection=selection,
        ensemble=ensemble,
        elapsed=elapsed,
    )


def test_criterion_4_disjoint_dominance(complementary_corpus):
    cc = complementary_corpus
    exact = all(
        cc.ensemble.iou[cid] == cc.scores[cc.selection.choices[cid]].iou[cid]
        for cid in cc.manifest.foreground_classes
    )
    dominates = all(
        cc.ensemble.mean() >= comp.mean() for comp in cc.scores.values()
    )
    background_ok = all(
        cc.ensemble.iou[0] >= comp.iou[0] for comp in cc.scores.values()
    )
    ok = exact and dominates and background_ok and cc.elapsed < 30.0
    report(4, "disjoint corpus: ensemble equals winners exactly", ok,
           f"{len(cc.manifest.images)} images, {cc.elapsed:.1f} s")
    for cid in cc.manifest.foreground_classes:
        winner = cc.selection.choices[cid]
        assert cc.ensemble.iou[cid] == cc.scores[winner].iou[cid]
    for name, comp in cc.scores.items():
        assert cc.ensemble.mean() >= comp.mean(), name
        assert cc.ensemble.iou[0] >= comp.iou[0], name
    assert cc.elapsed < 30.0


def test_criterion_5_ensemble_gain(complementary_corpus):
    cc = complementary_corpus
    best_single = max(comp.mean() for comp in cc.scores.values())
    gain = cc.ensemble.mean() - best_single
    ok = gain >= 0.02
    report(5, "ensemble gain over best single component", ok,
           f"gain {gain * 100:.1f} percentage points")
    assert gain >= 0.02


def test_criterion_6_classwise_beats_naive(tmp_path):
    manifest = load_manifest(FIXTURES / "adversarial" / "manifest.txt")
    selection = select_best(build_score_table(manifest))
    classwise = run_ensemble(manifest, selection, out_dir=tmp_path / "classwise")
    naive = run_ensemble(
        manifest, selection, variant="naive", out_dir=tmp_path / "naive"
    )
    # manual pixel counts from the fixture manifest comments
    expected_classwise = [1.0, 1.0, 1.0]
    expected_naive = [8 / 11, 1.0, 0.25]
    ok = (
        list(classwise.iou) == expected_classwise
        and list(naive.iou) == expected_naive
        and classwise.mean() > naive.mean()
    )
    report(6, "class-wise merge beats whole-mask baseline", ok,
           f"mIoU {classwise.mean():.4f} vs {naive.mean():.4f}")
    assert list(classwise.iou) == expected_classwise
    assert list(naive.iou) == expected_naive
    assert classwise.mean() > naive.mean()


DETERMINISM_CFG = """\
images 12
size 32 32
classes 4
shapes 1 3
seed 424242
component one
component two
degrade one 2,3 drop 0.4
degrade two 1 drop 0.4
degrade two 3 erode 1
"""


def _run_pipeline(root, config_path, threads: str) -> dict[str, bytes]:
    corpus = root / "corpus"
    assert main(["synth", str(config_path), "--out", str(corpus),
                 "--threads", threads]) == 0
    scores = root / "scores.csv"
    assert main(["evaluate", str(corpus / "manifest.txt"), "--out", str(scores),
                 "--threads", threads]) == 0
    selection = root / "selection.csv"
    assert main(["select", str(scores), "--out", str(selection)]) == 0
    ensemble = root / "ensemble"
    assert main(["merge", str(corpus / "manifest.txt"), str(selection),
                 "--out", str(ensemble), "--threads", threads]) == 0
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def test_criterion_7_pipeline_determinism(tmp_path):
    config_path = tmp_path / "corpus.cfg"
    config_path.write_text(DETERMINISM_CFG)
    runs = {
        "serial-1": _run_pipeline(tmp_path / "a", config_path, "1"),
        "serial-2": _run_pipeline(tmp_path / "b", config_path, "1"),
        "threads-8": _run_pipeline(tmp_path / "c", config_path, "8"),
    }
    baseline = runs["serial-1"]
    identical = all(other == baseline for other in runs.values())
    report(7, "byte-identical pipeline across runs and thread counts",
           identical, f"{len(baseline)} files compared")
    for name, run in runs.items():
        assert set(run) == set(baseline), name
        for rel, blob in baseline.items():
            assert run[rel] == blob, f"{name}: {rel}"


def test_criterion_8_cost_model():
    step3 = cost_estimate(CostParams(images=10, components=4, classes=21)).step3
    deployments = {
        cost_estimate(CostParams(images=10, components=n, classes=21)).deployment
        for n in (1, 2, 4, 8)
    }
    ok = step3 == 1050 and deployments == {10}
    report(8, "cost model step-3 count and deployment invariance", ok,
           f"step3={step3}")
    assert step3 == 1050
    assert deployments == {10}


def test_criterion_9_mode_divergence():
    manifest = load_manifest(FIXTURES / "mode_divergence" / "manifest.txt")
    accumulated = evaluate_component(manifest, "solo", MODE_ACCUMULATED)
    per_image = evaluate_component(manifest, "solo", MODE_PER_IMAGE_MEAN)
    ok = (
        abs(accumulated.iou[1] - 1 / 3) <= 1e-12
        and per_image.iou[1] == 0.5
    )
    report(9, "scoring modes diverge on the committed fixture", ok,
           f"accumulated {accumulated.iou[1]:.4f}, per-image mean {per_image.iou[1]:.4f}")
    assert abs(accumulated.iou[1] - 1 / 3) <= 1e-12
    assert per_image.iou[1] == 0.5
