"""Command line interface.

Subcommands:

* ``run --config cfg.json``  - execute an experiment grid, writing
  ``results.csv`` (one row per cell), ``aggregated.csv`` (mean/std over
  seeds), and one NDJSON per-sample report per mixture cell.
* ``comm-report --participants K --samples N --dim Z --epochs E`` - print the
  end-to-end exchange cost, the single-round cost, and their ratio.
* ``contributions --report file.ndjson`` - aggregate a per-sample report into
  mean gates per expert and mean contribution per participant.
* ``gen-data --spec spec.json --out dir`` - write synthetic per-participant
  embedding files.

Set VFLMOPE_LOG=debug|info|warning|error to control verbosity. Exit status is
0 on success and 1 on any handled error (argparse itself exits 2 on usage
errors). Identical configs produce byte-identical outputs.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, alignment, dataio, federation, mope
from .errors import ValidationError, VflError

log = logging.getLogger("vflmope")

# Stream ids for deriving independent per-cell RNG seeds from one run seed.
_STREAM_MCAR_TRAIN = 1
_STREAM_MCAR_TEST = 2
_STREAM_NOISE_TRAIN = 3
_STREAM_NOISE_TEST = 4
_STREAM_TRAIN = 5

RESULT_COLUMNS = ("head", "p_miss", "noisy", "seed", "accuracy", "f1", "comm_bytes")
AGG_COLUMNS = ("head", "p_miss", "noisy", "seeds", "accuracy_mean", "accuracy_std",
               "f1_mean", "f1_std", "comm_bytes_mean", "comm_bytes_std")


def _substream(seed: int, stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(seed), spawn_key=(stream,))


def _fmt(value) -> str:
    """Fixed CSV float formatting: six significant digits."""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.6g}"


@dataclass
class RunSettings:
    heads: list[str]
    p_miss: list[float]
    noisy_counts: list[int]
    seeds: list[int]
    epochs: int
    batch_size: int
    lr: float
    router_hidden: int
    noise_scale: float
    noise_scale_is_variance: bool
    output_dir: Path
    data: dict


def _parse_config(raw: dict, base_dir: Path) -> RunSettings:
    problems: list[str] = []

    def field(name, default=None, required=False):
        if name in raw:
            return raw[name]
        if required:
            problems.append(f"{name}: missing")
        return default

    data = field("data", required=True)
    if data is not None:
        if not isinstance(data, dict) or len(data.keys() & {"synthetic", "files"}) != 1:
            problems.append("data: must contain exactly one of 'synthetic' or 'files'")
    heads = field("heads", required=True) or []
    if not heads:
        problems.append("heads: must be a non-empty list")
    for h in heads:
        if h not in federation.HEAD_KINDS:
            problems.append(f"heads: unknown kind {h!r}")
    p_miss = field("p_miss", [0.0])
    for p in p_miss:
        if not isinstance(p, (int, float)) or not 0.0 <= p <= 1.0:
            problems.append(f"p_miss: {p!r} outside [0, 1]")
    noisy_counts = field("noisy_counts", [0])
    for c in noisy_counts:
        if not isinstance(c, int) or c < 0:
            problems.append(f"noisy_counts: {c!r} must be a non-negative int")
    seeds = field("seeds", [0])
    if not seeds:
        problems.append("seeds: must be non-empty")
    for s in seeds:
        if not isinstance(s, int):
            problems.append(f"seeds: {s!r} must be an int")
    train = field("train", {})
    epochs = train.get("epochs", 50)
    batch_size = train.get("batch_size", 256)
    lr = train.get("lr", 1e-4)
    router_hidden = train.get("router_hidden", 128)
    if not isinstance(epochs, int) or epochs < 0:
        problems.append(f"train.epochs: {epochs!r} must be an int >= 0")
    if not isinstance(batch_size, int) or batch_size < 1:
        problems.append(f"train.batch_size: {batch_size!r} must be an int >= 1")
    if not isinstance(lr, (int, float)) or lr <= 0:
        problems.append(f"train.lr: {lr!r} must be positive")
    if not isinstance(router_hidden, int) or router_hidden < 1:
        problems.append(f"train.router_hidden: {router_hidden!r} must be an int >= 1")
    noise = field("noise", {})
    noise_scale = noise.get("scale", 100.0)
    interpretation = noise.get("interpretation", "variance")
    if not isinstance(noise_scale, (int, float)) or noise_scale <= 0:
        problems.append(f"noise.scale: {noise_scale!r} must be positive")
    if interpretation not in ("variance", "std"):
        problems.append(f"noise.interpretation: {interpretation!r} not in ('variance', 'std')")
    output_dir = field("output_dir", "results")
    if problems:
        raise ValidationError("invalid config: " + "; ".join(problems))
    return RunSettings(
        heads=list(heads), p_miss=[float(p) for p in p_miss],
        noisy_counts=list(noisy_counts), seeds=list(seeds),
        epochs=epochs, batch_size=batch_size, lr=float(lr),
        router_hidden=router_hidden, noise_scale=float(noise_scale),
        noise_scale_is_variance=(interpretation == "variance"),
        output_dir=(base_dir / output_dir), data=data,
    )


def _load_data(settings: RunSettings, base_dir: Path) -> dataio.SplitData:
    if "synthetic" in settings.data:
        raw = dict(settings.data["synthetic"])
        raw["dims"] = tuple(raw.get("dims", ()))
        raw["separations"] = tuple(raw.get("separations", ()))
        try:
            spec = dataio.SyntheticSpec(**raw)
        except TypeError as exc:
            raise ValidationError(f"invalid config: data.synthetic: {exc}") from exc
        return dataio.gen_synthetic(spec)
    files = settings.data["files"]
    train_paths = files.get("train") or []
    test_paths = files.get("test") or []
    if not train_paths or len(train_paths) != len(test_paths):
        raise ValidationError(
            "invalid config: data.files must list the same participants for "
            "train and test, active party last"
        )
    train = [dataio.read_embedding_file(base_dir / p) for p in train_paths]
    test = [dataio.read_embedding_file(base_dir / p) for p in test_paths]
    if train[-1].labels is None or test[-1].labels is None:
        raise ValidationError("the active party's files must carry labels")

    def splice(parts: list[dataio.EmbeddingFile]):
        ids, presence = alignment.align_by_ids([p.ids.tolist() for p in parts])
        order = np.asarray(ids, dtype=np.uint64)
        blocks = []
        for k, part in enumerate(parts):
            pos = {int(v): j for j, v in enumerate(part.ids)}
            mat = np.zeros((len(order), part.embeddings.shape[1]))
            for i, sid in enumerate(order):
                j = pos.get(int(sid))
                if j is not None:
                    mat[i] = part.embeddings[j]
            blocks.append(mat)
        return blocks, order, presence

    train_blocks, train_ids, _ = splice(train)
    test_blocks, test_ids, _ = splice(test)
    return dataio.SplitData(
        train_blocks=train_blocks, train_labels=train[-1].labels,
        train_ids=train_ids, test_blocks=test_blocks,
        test_labels=test[-1].labels, test_ids=test_ids,
    )


def _report_name(head: str, p: float, noisy: int, seed: int) -> str:
    return f"report_{head}_p{p:g}_n{noisy}_s{seed}.ndjson"


def _run_cell(data: dataio.SplitData, settings: RunSettings, head_kind: str,
              p: float, noisy: int, seed: int):
    classes = int(max(data.train_labels.max(), data.test_labels.max())) + 1
    fed_train = federation.make_federation(data.train_blocks, data.train_labels,
                                           ids=data.train_ids)
    fed_train = federation.inject_noisy(
        fed_train, noisy, _substream(seed, _STREAM_NOISE_TRAIN),
        scale=settings.noise_scale,
        scale_is_variance=settings.noise_scale_is_variance)
    k_total = len(fed_train)
    presence_train = alignment.mcar_mask(
        len(data.train_ids), k_total, p, _substream(seed, _STREAM_MCAR_TRAIN))
    cfg = mope.TrainConfig(epochs=settings.epochs, batch_size=settings.batch_size,
                           lr=settings.lr, seed=_substream(seed, _STREAM_TRAIN))
    result = federation.run_single_round(fed_train, presence_train, head_kind, cfg,
                                         n_classes=classes,
                                         router_hidden=settings.router_hidden)

    fed_test = federation.make_federation(data.test_blocks, data.test_labels,
                                          ids=data.test_ids)
    fed_test = federation.inject_noisy(
        fed_test, noisy, _substream(seed, _STREAM_NOISE_TEST),
        scale=settings.noise_scale,
        scale_is_variance=settings.noise_scale_is_variance)
    presence_test = alignment.mcar_mask(
        len(data.test_ids), k_total, p, _substream(seed, _STREAM_MCAR_TEST))
    test_blocks, presence_test, test_labels = federation.gather_blocks(
        fed_test, presence_test)
    report = dataio.evaluate(result.head, test_blocks, presence_test, test_labels)
    return result, report, test_blocks, presence_test, test_labels


def _write_sample_reports(path: Path, head: mope.MopeHead, test_blocks,
                          presence, labels, ids) -> None:
    feats = mope.stack_padded(test_blocks, presence, head.layout)
    with open(path, "w", newline="\n") as fh:
        for i in range(feats.shape[0]):
            row = mope.per_sample_report(
                head, feats[i], sample_id=int(ids[i]), label=int(labels[i]),
                presence_row=presence[i])
            fh.write(json.dumps(row) + "\n")


def cmd_run(config_path: str) -> dict:
    config_file = Path(config_path)
    try:
        raw = json.loads(config_file.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid config: not valid JSON ({exc})") from exc
    settings = _parse_config(raw, config_file.parent)
    data = _load_data(settings, config_file.parent)
    out_dir = settings.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    reports_dir = out_dir / "reports"
    reports_dir.mkdir(exist_ok=True)

    rows = []
    for head_kind in settings.heads:
        for p in settings.p_miss:
            for noisy in settings.noisy_counts:
                for seed in settings.seeds:
                    log.info("cell head=%s p_miss=%g noisy=%d seed=%d",
                             head_kind, p, noisy, seed)
                    try:
                        result, report, blocks, presence, labels = _run_cell(
                            data, settings, head_kind, p, noisy, seed)
                    except Exception as exc:
                        raise RuntimeError(
                            f"cell head={head_kind} p_miss={p:g} noisy={noisy} "
                            f"seed={seed} failed: {exc}"
                        ) from exc
                    rows.append({
                        "head": head_kind, "p_miss": p, "noisy": noisy,
                        "seed": seed, "accuracy": report.accuracy,
                        "f1": report.macro_f1,
                        "comm_bytes": result.ledger.total_bytes,
                    })
                    if head_kind == "mope":
                        _write_sample_reports(
                            reports_dir / _report_name(head_kind, p, noisy, seed),
                            result.head, blocks, presence, labels,
                            data.test_ids)

    results_path = out_dir / "results.csv"
    with open(results_path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for r in rows:
            writer.writerow([r["head"], _fmt(r["p_miss"]), r["noisy"], r["seed"],
                             _fmt(r["accuracy"]), _fmt(r["f1"]), r["comm_bytes"]])

    agg_path = out_dir / "aggregated.csv"
    with open(agg_path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AGG_COLUMNS)
        for head_kind in settings.heads:
            for p in settings.p_miss:
                for noisy in settings.noisy_counts:
                    cell = [r for r in rows
                            if r["head"] == head_kind and r["p_miss"] == p
                            and r["noisy"] == noisy]
                    acc = np.array([r["accuracy"] for r in cell])
                    f1 = np.array([r["f1"] for r in cell])
                    comm = np.array([r["comm_bytes"] for r in cell], dtype=np.float64)
                    std = lambda a: float(a.std(ddof=1)) if a.size > 1 else 0.0
                    writer.writerow([
                        head_kind, _fmt(p), noisy, len(cell),
                        _fmt(acc.mean()), _fmt(std(acc)),
                        _fmt(f1.mean()), _fmt(std(f1)),
                        _fmt(comm.mean()), _fmt(std(comm)),
                    ])
    print(f"wrote {results_path} ({len(rows)} cells) and {agg_path}")
    return {"results": results_path, "aggregated": agg_path, "rows": rows}


def cmd_comm_report(participants: int, samples: int, dim: int, epochs: int) -> dict:
    end_to_end = federation.simulate_end_to_end_cost(participants, samples, dim, epochs)
    single = (participants - 1) * samples * dim * federation.BYTES_PER_VALUE
    ratio = (end_to_end / single) if single else float("nan")
    print(f"participants={participants} samples={samples} dim={dim} epochs={epochs}")
    print(f"end-to-end bytes:   {end_to_end}")
    print(f"single-round bytes: {single}")
    print(f"reduction ratio:    {ratio:g} (= 2 x epochs)")
    return {"end_to_end": end_to_end, "single_round": single, "ratio": ratio}


def cmd_contributions(report_path: str) -> dict:
    rows = []
    with open(report_path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    if not rows:
        raise ValidationError(f"report {report_path} is empty")
    gates = np.array([r["gates"] for r in rows])
    contribs = np.array([r["contributions"] for r in rows])
    n_participants = contribs.shape[1]
    subsets = alignment.active_subsets(n_participants)
    if gates.shape[1] != len(subsets):
        raise ValidationError(
            f"report has {gates.shape[1]} gates which does not match "
            f"{n_participants} participants"
        )
    mean_gates = gates.mean(axis=0)
    mean_contribs = contribs.mean(axis=0)
    print(f"samples: {len(rows)}")
    print("mean gate per expert:")
    for s, g in zip(subsets, mean_gates):
        print(f"  {alignment.subset_label(s, n_participants)}: {g:.6g}")
    print("mean contribution per participant:")
    for k, c in enumerate(mean_contribs):
        name = "A" if k == n_participants - 1 else f"P{k}"
        print(f"  {name}: {c:.6g}")
    return {"mean_gates": mean_gates, "mean_contributions": mean_contribs,
            "samples": len(rows)}


def cmd_gen_data(spec_path: str, out_dir: str) -> list[Path]:
    raw = json.loads(Path(spec_path).read_text())
    raw["dims"] = tuple(raw.get("dims", ()))
    raw["separations"] = tuple(raw.get("separations", ()))
    try:
        spec = dataio.SyntheticSpec(**raw)
    except TypeError as exc:
        raise ValidationError(f"invalid spec: {exc}") from exc
    data = dataio.gen_synthetic(spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    last = data.n_participants - 1
    for k in range(data.n_participants):
        for split, blocks, ids, labels in (
            ("train", data.train_blocks, data.train_ids, data.train_labels),
            ("test", data.test_blocks, data.test_ids, data.test_labels),
        ):
            path = out / f"participant{k}_{split}.vfle"
            dataio.write_embedding_file(
                path, k, ids, blocks[k],
                labels=labels if k == last else None)
            written.append(path)
            print(f"wrote {path}")
    return written


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vflmope",
        description="vertical federated learning simulator with a "
                    "mixture-of-predefined-experts head",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment grid from a JSON config")
    p_run.add_argument("--config", required=True)

    p_comm = sub.add_parser("comm-report", help="print communication costs")
    p_comm.add_argument("--participants", type=int, required=True)
    p_comm.add_argument("--samples", type=int, required=True)
    p_comm.add_argument("--dim", type=int, required=True)
    p_comm.add_argument("--epochs", type=int, required=True)

    p_contrib = sub.add_parser("contributions",
                               help="aggregate a per-sample NDJSON report")
    p_contrib.add_argument("--report", required=True)

    p_gen = sub.add_parser("gen-data", help="write synthetic embedding files")
    p_gen.add_argument("--spec", required=True)
    p_gen.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("VFLMOPE_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cmd_run(args.config)
        elif args.command == "comm-report":
            cmd_comm_report(args.participants, args.samples, args.dim, args.epochs)
        elif args.command == "contributions":
            cmd_contributions(args.report)
        elif args.command == "gen-data":
            cmd_gen_data(args.spec, args.out)
    except (VflError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
