"""Acceptance suite: one test per release criterion.

Each test prints a single ``PASS criterion N: ...`` / ``FAIL criterion N``
line (run with ``pytest tests/test_acceptance.py -v -s`` to watch them) and
asserts the criterion at its stated tolerance. Runtime-limited criteria
also assert their budgets.
"""

import dataclasses
import math
import time

import numpy as np
import pytest

from _fd import assert_matches_fd, fd_gradient, grad_errors
from test_metrics import (
    kappa_oracle,
    macro_auroc_oracle,
    mcc_oracle,
    prf_oracle,
    random_prediction_set,
)
from test_tensor import OP_CASES, op_case_rng

from vitray.cli import main as cli_main
from vitray.data import generate_synthetic
from vitray.metrics import auroc, cohens_kappa, confusion, f1_score, mcc
from vitray.model import ViTConfig, ViTModel, count_parameters
from vitray.optim import CosineSchedule, cross_entropy
from vitray.tensor import Tensor, make_rng
from vitray.train import (
    REPORT_HEADER,
    TrainConfig,
    parse_report_csv,
    run_compare,
    run_training,
)

FD_TINY = ViTConfig(image_size=16, patch_size=8, in_channels=1, hidden_size=8,
                    intermediate_size=16, num_layers=2, num_heads=2, num_classes=3)
OVERFIT_VIT = dict(image_size=32, patch_size=8, in_channels=1, hidden_size=64,
                   intermediate_size=128, num_layers=2, num_heads=4)


def report(number: int, name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"{status} criterion {number}: {name}{suffix}")
    assert ok, f"criterion {number} failed: {name}{suffix}"


def synth_config(root, out_dir, *, classes, image_size, vit_args, epochs, batch_size,
                 lr_max, lr_min=0.0, seed=0) -> TrainConfig:
    vit = ViTConfig(num_classes=classes, **vit_args)
    return TrainConfig(
        vit=vit,
        schedule=CosineSchedule(eta_max=lr_max, eta_min=lr_min, t_max=max(epochs, 1)),
        train_manifest=root / "train.csv",
        test_manifest=root / "test.csv",
        out_dir=out_dir,
        batch_size=batch_size,
        epochs=epochs,
        seed=seed,
    )


@pytest.fixture(scope="module")
def generalization_run(tmp_path_factory):
    """300-train/100-test 4-class separable set, 8-epoch run (criteria 3/6/9)."""
    root = tmp_path_factory.mktemp("gen_data")
    generate_synthetic(4, 75, 32, seed=101, out_dir=root, split="train")
    generate_synthetic(4, 25, 32, seed=102, out_dir=root, split="test")
    cfg = synth_config(root, tmp_path_factory.mktemp("gen_run"), classes=4,
                       image_size=32, vit_args=OVERFIT_VIT, epochs=8, batch_size=32,
                       lr_max=1e-4, seed=7)
    reports, _ = run_training(cfg)
    return cfg, reports


def test_criterion_1_gradient_oracle():
    start = time.perf_counter()
    worst = 0.0

    # every differentiable operation, 20 seeds each
    for seed in range(20):
        for name in sorted(OP_CASES):
            fn, arrays = OP_CASES[name](op_case_rng(name, seed + 100))
            assert_matches_fd(fn, arrays, tol=1e-4, h=1e-6)

    # full tiny model loss: every parameter against central differences
    for seed in range(20):
        model = ViTModel(FD_TINY, rng=make_rng(5000 + seed))
        images = make_rng(6000 + seed).uniform(-1, 1, (1, 1, 16, 16))
        labels = [seed % 3]

        loss = cross_entropy(model.forward(Tensor(images)), labels)
        loss.backward()
        analytic = {name: t.grad.copy() for name, t in model.params.items()}

        for name, tensor in model.params.items():
            base = tensor.data.copy()

            def f(arr, _name=name):
                model.params[_name] = Tensor(arr)
                value = cross_entropy(model.forward(Tensor(images)), labels).item()
                return value

            numeric = fd_gradient(f, [base], 0, h=1e-6)
            model.params[name] = Tensor(base)
            worst = max(worst, grad_errors(analytic[name], numeric).max())
            assert worst < 1e-4, f"parameter {name} gradient error {worst:.2e}"

    elapsed = time.perf_counter() - start
    report(1, "gradient oracle", worst < 1e-4 and elapsed < 120,
           f"max rel err {worst:.2e}, {elapsed:.1f}s")


def test_criterion_2_parameter_counts():
    patch = count_parameters(ViTConfig(), "patch_embed")
    head = count_parameters(ViTConfig(num_classes=7), "head")
    ok = patch == 590_592 and head == 5_383
    report(2, "parameter-count equality", ok, f"patch_embed={patch}, head={head}")


def test_criterion_3_schedule_exactness(generalization_run):
    sched = CosineSchedule(eta_max=1e-4, eta_min=1e-6, t_max=10)
    worst = 0.0
    for t in (0, 5, 10):
        closed_form = 1e-6 + 0.5 * (1e-4 - 1e-6) * (1 + math.cos(t * math.pi / 10))
        worst = max(worst, abs(sched.lr_at(t) - closed_form))

    cfg, reports = generalization_run
    applied_ok = all(r.lr == cfg.schedule.lr_at(r.epoch - 1) for r in reports)
    report(3, "schedule exactness", worst < 1e-12 and applied_ok,
           f"formula dev {worst:.1e}, applied lr exact over {len(reports)} epochs")


def test_criterion_4_metric_oracles():
    start = time.perf_counter()
    worst = 0.0
    rng = make_rng(22)
    for _ in range(500):
        scores, labels = random_prediction_set(rng, max_n=50, max_c=7)
        cm = confusion(scores, labels)

        expected_auc = macro_auroc_oracle(scores, labels)
        got_auc = auroc(scores, labels)
        if np.isnan(expected_auc):
            assert np.isnan(got_auc)
        else:
            worst = max(worst, abs(got_auc - expected_auc))

        _, _, expected_f1 = prf_oracle(cm)
        worst = max(worst, abs(f1_score(cm) - expected_f1))
        worst = max(worst, abs(cohens_kappa(cm) - kappa_oracle(cm)))
        worst = max(worst, abs(mcc(cm) - mcc_oracle(cm)))
        assert worst < 1e-9

    elapsed = time.perf_counter() - start
    report(4, "metric oracles", worst < 1e-9 and elapsed < 60,
           f"500 sets, max dev {worst:.1e}, {elapsed:.1f}s")


def test_criterion_5_overfit(tmp_path):
    start = time.perf_counter()
    root = tmp_path / "data"
    generate_synthetic(3, 20, 32, seed=51, out_dir=root, split="train")
    # evaluating on the training manifest makes the per-epoch metrics
    # train-set metrics, which is what the overfit check needs
    (root / "test.csv").write_text((root / "train.csv").read_text())

    cfg = synth_config(root, tmp_path / "run", classes=3, image_size=32,
                       vit_args=OVERFIT_VIT, epochs=200, batch_size=8,
                       lr_max=1e-4, lr_min=1e-4, seed=5)  # constant lr 1e-4
    reports, _ = run_training(cfg)
    best_epoch, best_acc = max(((r.epoch, r.accuracy) for r in reports), key=lambda p: p[1])
    elapsed = time.perf_counter() - start
    report(5, "overfit tiny model", best_acc >= 0.99 and elapsed < 300,
           f"train accuracy {best_acc:.3f} first >=0.99 by epoch "
           f"{min((r.epoch for r in reports if r.accuracy >= 0.99), default='never')}, {elapsed:.0f}s")


def test_criterion_6_generalization(generalization_run):
    cfg, reports = generalization_run
    final_auroc = reports[-1].roc_auc

    losses = [r.loss for r in reports]
    smoothed = [np.mean(losses[max(0, i - 2):i + 1]) for i in range(len(losses))]
    monotone = all(b <= a + 1e-9 for a, b in zip(smoothed, smoothed[1:]))

    report(6, "generalization smoke test", final_auroc >= 0.95 and monotone,
           f"final macro AUROC {final_auroc:.4f}, smoothed loss monotone={monotone}")


def test_criterion_7_identity_mask_aa(tmp_path):
    root = tmp_path / "data"
    generate_synthetic(2, 6, 16, seed=71, out_dir=root, split="train")
    generate_synthetic(2, 3, 16, seed=72, out_dir=root, split="test")
    from vitray.images import write_image
    for mask_file in (root / "masks").iterdir():
        write_image(mask_file, np.full((16, 16), 255, dtype=np.uint8))

    vit_args = dict(image_size=16, patch_size=8, in_channels=1, hidden_size=8,
                    intermediate_size=16, num_layers=1, num_heads=2)
    base = synth_config(root, tmp_path / "cmp", classes=2, image_size=16,
                        vit_args=vit_args, epochs=2, batch_size=4, lr_max=1e-3, seed=3)
    run_compare(dataclasses.replace(base, pipeline_mode="full"),
                dataclasses.replace(base, pipeline_mode="masked"))

    full_bytes = (tmp_path / "cmp" / "full" / "report.csv").read_bytes()
    masked_bytes = (tmp_path / "cmp" / "masked" / "report.csv").read_bytes()
    report(7, "identity-mask A/A comparison", full_bytes == masked_bytes,
           f"{len(full_bytes)} report bytes identical" if full_bytes == masked_bytes
           else "arm reports differ")


def test_criterion_8_determinism_and_resume(tmp_path):
    root = tmp_path / "data"
    generate_synthetic(2, 6, 16, seed=81, out_dir=root, split="train")
    generate_synthetic(2, 3, 16, seed=82, out_dir=root, split="test")
    vit_args = dict(image_size=16, patch_size=8, in_channels=1, hidden_size=8,
                    intermediate_size=16, num_layers=1, num_heads=2)

    def cfg_for(out, checkpoint_every=0):
        cfg = synth_config(root, tmp_path / out, classes=2, image_size=16,
                           vit_args=vit_args, epochs=4, batch_size=4, lr_max=1e-3, seed=13)
        return dataclasses.replace(cfg, checkpoint_every=checkpoint_every)

    run_training(cfg_for("a", checkpoint_every=1))
    run_training(cfg_for("b"))
    identical = (tmp_path / "a" / "report.csv").read_bytes() == \
                (tmp_path / "b" / "report.csv").read_bytes()
    ckpt_identical = (tmp_path / "a" / "checkpoint_final.ckpt").read_bytes() == \
                     (tmp_path / "b" / "checkpoint_final.ckpt").read_bytes()

    resumed, _ = run_training(cfg_for("resumed"),
                              resume_from=tmp_path / "a" / "checkpoint_epoch_0002.ckpt")
    original = parse_report_csv(tmp_path / "a" / "report.csv")
    resume_ok = [r.csv_row() for r in resumed] == [r.csv_row() for r in original[2:]]

    report(8, "determinism and resume", identical and ckpt_identical and resume_ok,
           f"reports identical={identical}, checkpoints identical={ckpt_identical}, "
           f"resume epochs 3-4 exact={resume_ok}")


def test_criterion_9_report_format(generalization_run, tmp_path):
    cfg, reports = generalization_run
    report_path = cfg.out_dir / "report.csv"
    lines = report_path.read_text().splitlines()

    header_ok = lines[0] == REPORT_HEADER
    # per-epoch table layout: Loss / ROC AUC / MCC plus the
    # accuracy / precision / recall / F1 curves
    columns = lines[0].split(",")
    columns_ok = {"loss", "roc_auc", "mcc", "accuracy", "precision", "recall", "f1"} <= set(columns)
    rows_ok = len(lines) == 1 + 8 and all(len(l.split(",")) == len(columns) for l in lines[1:])

    svg_path = tmp_path / "report.svg"
    plot_ok = cli_main(["plot", "--report", str(report_path), "--out", str(svg_path)]) == 0
    svg_ok = svg_path.exists() and svg_path.read_text().startswith("<svg")

    report(9, "report-format conformance",
           header_ok and columns_ok and rows_ok and plot_ok and svg_ok,
           f"8 rows, header '{lines[0]}', plot renders={svg_ok}")
