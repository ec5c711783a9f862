"""Pilot run that mirrors the acceptance suite's training plan and prints
every ordering/margin the committed thresholds rely on."""

import sys
import time
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from luxtune.dataio import DatasetConfig, build_dataset
from luxtune.experiments import (
    ExperimentSpec,
    MetricReport,
    ablate_direction,
    ablate_filter_size,
    evaluate_brightness_only,
    evaluate_fixed,
    run_protocol,
)
from luxtune.network import EnhancerModel, UNetConfig
from luxtune.training import TrainSchedule, finetune_modulation, train_base

T0 = time.perf_counter()


def log(msg):
    print(f"[{time.perf_counter()-T0:7.0f}s] {msg}", flush=True)


tmp = Path(tempfile.mkdtemp())
log(f"workdir {tmp}")
manifest = build_dataset(DatasetConfig(), tmp / "ds")  # 60 scenes, 128x128, seed 2024
log("dataset built")

CFG = UNetConfig(depth=4, base_channels=8)
LONG = TrainSchedule(patch_size=64, epochs_high=200, epochs_low=50, finetune_epochs=100, seed=0)
SHORT = TrainSchedule(patch_size=64, epochs_high=100, epochs_low=20, finetune_epochs=60, seed=0)

cache = {}


def base_model(target, schedule, tag):
    key = (tag,)
    if key not in cache:
        model = EnhancerModel.build(CFG, init_seed=0)
        model, losses = train_base(model, manifest, 0.1, target, schedule)
        log(f"trained {tag}: loss {losses[0]:.4f} -> {losses[-1]:.4f}")
        cache[key] = model
    return cache[key]


# --- criterion 5: margin over brightness-only at the low anchor
base1 = base_model(1.0, LONG, "base@1 (long)")
rep5 = MetricReport(experiment_id="c5")
evaluate_fixed(rep5, base1, "trained", manifest.split("test"), 0.1, 1.0)
evaluate_brightness_only(rep5, manifest.split("test"), 0.1, 1.0)
m_tr = rep5.mean("trained", 1.0)
m_bo = rep5.mean("brightness-only", 1.0)
log(f"C5 margin: trained {m_tr:.2f} vs brightness-only {m_bo:.2f} -> {m_tr-m_bo:.2f} dB")

# --- criterion 6: A diagonal dominance, C >= B
fixed5 = base_model(5.0, SHORT, "fixed@5")
fixed10 = base_model(10.0, SHORT, "fixed@10")
fixed1s = base_model(1.0, SHORT, "fixed@1 (short)")
specA = ExperimentSpec(protocol="A")
repA = run_protocol(specA, manifest, {"fixed@1": fixed1s, "fixed@5": fixed5, "fixed@10": fixed10})
for t in (1.0, 5.0, 10.0):
    diag = repA.mean(f"fixed@{t:g}", t)
    offs = [repA.mean(f"fixed@{t:g}", e) for e in (1.0, 5.0, 10.0) if e != t]
    log(f"A: fixed@{t:g} diagonal {diag:.2f} vs off {offs[0]:.2f}/{offs[1]:.2f}")

mixed = base_model([1.0, 5.0, 10.0], LONG, "mixed (long)")
repB = run_protocol(ExperimentSpec(protocol="B"), manifest, {"mixed": mixed})
for t in (1.0, 5.0, 10.0):
    log(f"B: mixed @ {t:g}s -> {repB.mean('mixed', t):.2f} dB")

cont = base1.insert_modulation(3)
cont, fl = finetune_modulation(cont, manifest, 0.1, 10.0, LONG)
log(f"finetuned continuous: loss {fl[0]:.4f} -> {fl[-1]:.4f}")
specC = ExperimentSpec(protocol="C", test_exposures=(5.0,), alpha2_mode="grid")
repC = run_protocol(specC, manifest, {"continuous": cont})
c5s = repC.mean("continuous", 5.0)
b5s = repB.mean("mixed", 5.0)
log(f"C vs B at 5s: continuous {c5s:.2f} vs mixed {b5s:.2f} -> margin {c5s-b5s:.2f} dB")
# also loglinear mode for reference
specCl = ExperimentSpec(protocol="C", test_exposures=(5.0,), alpha2_mode="loglinear")
repCl = run_protocol(specCl, manifest, {"continuous": cont})
log(f"C loglinear at 5s: {repCl.mean('continuous', 5.0):.2f} dB")
# D protocol structure: anchors (1,5), test 10s extended
cont15 = base1.insert_modulation(3)
cont15, _ = finetune_modulation(cont15, manifest, 0.1, 5.0, SHORT)
specD = ExperimentSpec(protocol="D", anchor_exposures=(1.0, 5.0), test_exposures=(10.0,),
                       alpha2_mode="loglinear")
repD = run_protocol(specD, manifest, {"continuous": cont15})
log(f"D (anchors 1,5 tested 10s, extrapolated a2): {repD.mean('continuous', 10.0):.2f} dB")

# --- criterion 7: filter sizes and tuning direction
rep_f = ablate_filter_size(manifest, lambda: base1, SHORT, sizes=(1, 3, 5, 7))
for s in (1, 3, 5, 7):
    log(f"filter {s}x{s}: {rep_f.mean(f'filter-{s}x{s}', 5.0):.2f} dB")


def make_dir(base_exp, final_exp):
    if base_exp == 1.0:
        model = base1.insert_modulation(3)
    else:
        model = base_model(base_exp, LONG, f"base@{base_exp:g} (long,dir)").insert_modulation(3)
    model, _ = finetune_modulation(model, manifest, 0.1, final_exp, LONG)
    return model


rep_d = ablate_direction(manifest, make_dir, seed=0)
fwd = rep_d.mean("forward", 5.0)
bwd = rep_d.mean("backward", 5.0)
log(f"direction: forward {fwd:.2f} vs backward {bwd:.2f} -> margin {fwd-bwd:.2f} dB")
log("pilot done")
