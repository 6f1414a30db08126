"""Command-line pipeline: gen-data, train-audited, extract, train-mint, evaluate,
report, serve.

Option precedence is defaults < --config file < explicit flags. Exit codes:
0 on success, 2 when a prerequisite artifact is missing (the path is named),
1 for any other error. Errors print one machine-parsable line to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import nn
from .aad import CNN_KINDS, VANILLA_KINDS, AuditableDataKind, feature_set_from_records
from .audited import ALL_TAPS, build_toy_audited_model, train_audited
from .classifiers import CNN, VANILLA, build_cnn, build_vanilla, predict_scores, train_mint
from .data import (
    Membership,
    SyntheticDataConfig,
    generate_synthetic_dataset,
    load_dataset,
    load_dataset_config,
    save_dataset,
)
from .feature_cache import cache_features, load_features
from .harness import (
    CNN_CELL_CONFIG,
    VANILLA_CELL_CONFIG,
    ExperimentGrid,
    compute_accuracy,
    emit_report,
    run_grid,
    table_from_json,
    write_report_files,
)
from .registry import (
    AuditRegistry,
    register_classifier,
    save_audited_model,
    save_classifier,
    load_audited_model,
)


class MissingPrerequisite(Exception):
    def __init__(self, path):
        super().__init__(str(path))
        self.path = str(path)


def _fail(code: str, message: str, **fields) -> None:
    extra = "".join(f" {k}={v}" for k, v in fields.items())
    print(f'mintaudit: error code={code}{extra} message="{message}"', file=sys.stderr)


def _require_path(path, kind: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingPrerequisite(p)
    return p


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    return json.loads(_require_path(path, "config").read_text())


def _opt(args, config: dict, name: str, default):
    """defaults < config file < flags."""
    flag = getattr(args, name.replace("-", "_"), None)
    if flag is not None:
        return flag
    if name in config:
        return config[name]
    return default


def _parse_kinds(spec: str) -> tuple[AuditableDataKind, ...]:
    if spec == "all":
        return VANILLA_KINDS
    if spec == "conv":
        return CNN_KINDS
    return tuple(AuditableDataKind.from_tag(t.strip()) for t in spec.split(","))


def cmd_gen_data(args) -> int:
    cfg_file = _load_config_file(args.config)
    config = SyntheticDataConfig(
        n_classes=_opt(args, cfg_file, "classes", 4),
        samples_per_class=_opt(args, cfg_file, "samples-per-class", 1000),
        n_external=_opt(args, cfg_file, "external", 4000),
        image_size=_opt(args, cfg_file, "image-size", 32),
        channels=_opt(args, cfg_file, "channels", 1),
        member_external_generator_offset=_opt(args, cfg_file, "offset", 1.0),
        seed=_opt(args, cfg_file, "seed", 0),
    )
    out = Path(_opt(args, cfg_file, "out", "data"))
    partition = generate_synthetic_dataset(config)
    digest = save_dataset(partition, out, config=config)
    print(f"dataset written to {out} ({len(partition.members)} member + "
          f"{len(partition.externals)} external) digest={digest}")
    return 0


def cmd_train_audited(args) -> int:
    cfg_file = _load_config_file(args.config)
    data_dir = _require_path(_opt(args, cfg_file, "data", "data"), "dataset")
    _require_path(Path(data_dir) / "manifest.json", "dataset manifest")
    out = Path(_opt(args, cfg_file, "out", "model"))
    partition = load_dataset(data_dir)
    n_classes = max(s.class_label for s in partition.members) + 1
    shape = partition.members[0].image.shape

    model = build_toy_audited_model(
        n_classes=n_classes, in_channels=shape[0], image_size=shape[1],
        embedding_dim=_opt(args, cfg_file, "embedding-dim", 32),
        seed=_opt(args, cfg_file, "seed", 0))
    config = nn.TrainConfig(
        learning_rate=_opt(args, cfg_file, "lr", 0.02),
        epochs=_opt(args, cfg_file, "epochs", 10),
        batch_size=_opt(args, cfg_file, "batch-size", 64),
        seed=_opt(args, cfg_file, "seed", 0))
    metrics = train_audited(model, partition.members, config)

    out.mkdir(parents=True, exist_ok=True)
    save_audited_model(model, out / "audited")
    (out / "train_metrics.json").write_text(json.dumps({
        "epoch_losses": metrics.epoch_losses,
        "epoch_accuracies": metrics.epoch_accuracies,
    }, indent=1))
    print(f"audited model written to {out}/audited.nn "
          f"(final train accuracy {metrics.final_accuracy:.3f})")
    return 0


def _load_model(path) -> "AuditedModel":  # noqa: F821 - docs only
    base = Path(path)
    if base.is_dir():
        base = base / "audited"
    _require_path(base.with_suffix(".nn"), "audited model checkpoint")
    _require_path(base.with_suffix(".json"), "audited model manifest")
    return load_audited_model(base)


def cmd_extract(args) -> int:
    from .aad import batch_extract

    cfg_file = _load_config_file(args.config)
    data_dir = _require_path(_opt(args, cfg_file, "data", "data"), "dataset")
    model = _load_model(_opt(args, cfg_file, "model", "model"))
    out = Path(_opt(args, cfg_file, "out", "features"))
    with_maps = bool(_opt(args, cfg_file, "maps", False))

    partition = load_dataset(data_dir)
    records = batch_extract(model, partition.all_samples, ALL_TAPS)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for kind in VANILLA_KINDS:
        fs = feature_set_from_records(records, kind, form="vector")
        path = out / f"{kind.tag}.mintfc"
        cache_features(fs, path)
        written.append(path.name)
    if with_maps:
        for kind in CNN_KINDS:
            fs = feature_set_from_records(records, kind, form="maps")
            path = out / f"{kind.tag}.maps.mintfc"
            cache_features(fs, path)
            written.append(path.name)
    print(f"wrote {len(written)} feature caches to {out}: {', '.join(written)}")
    return 0


def cmd_train_mint(args) -> int:
    cfg_file = _load_config_file(args.config)
    features_dir = Path(_opt(args, cfg_file, "features", "features"))
    kind = AuditableDataKind.from_tag(_opt(args, cfg_file, "kind", "all_conv_layers"))
    arch = _opt(args, cfg_file, "arch", VANILLA)
    seed = _opt(args, cfg_file, "seed", 0)
    train_size = _opt(args, cfg_file, "train-size", 1000)
    test_size = _opt(args, cfg_file, "test-size", 1000)
    out = Path(_opt(args, cfg_file, "out", "registry"))
    model_path = _opt(args, cfg_file, "model", "model")

    suffix = ".maps.mintfc" if arch == CNN else ".mintfc"
    cache_path = _require_path(features_dir / f"{kind.tag}{suffix}", "feature cache")
    model = _load_model(model_path)
    features = load_features(cache_path)

    member_ids = [i for i, l in zip(features.ids, features.labels) if l == 1.0]
    external_ids = [i for i, l in zip(features.ids, features.labels) if l == 0.0]
    from .nn.rng import SPLIT, stream
    m_order = stream(seed, SPLIT, 0).permutation(len(member_ids))
    e_order = stream(seed, SPLIT, 1).permutation(len(external_ids))
    need_m, need_e = (train_size + 1) // 2 + (test_size + 1) // 2, train_size // 2 + test_size // 2
    if need_m > len(member_ids) or need_e > len(external_ids):
        _fail("insufficient_samples",
              f"need {need_m} member + {need_e} external, cache holds "
              f"{len(member_ids)}+{len(external_ids)}")
        return 1
    m_ids = [member_ids[i] for i in m_order]
    e_ids = [external_ids[i] for i in e_order]
    mtr, mte = (train_size + 1) // 2, (test_size + 1) // 2
    train_ids = tuple(m_ids[:mtr]) + tuple(e_ids[:train_size // 2])
    test_ids = tuple(m_ids[mtr:mtr + mte]) + tuple(e_ids[train_size // 2:
                                                         train_size // 2 + test_size // 2])

    base_config = VANILLA_CELL_CONFIG if arch == VANILLA else CNN_CELL_CONFIG
    config = dataclasses.replace(base_config, seed=seed)
    train = features.subset(train_ids)
    clf = (build_vanilla(train.x.shape[1], seed=seed) if arch == VANILLA
           else build_cnn(train.x.shape[1:], seed=seed))
    metrics = train_mint(clf, train, config)

    test = features.subset(test_ids)
    scores = predict_scores(clf, test.x)
    from .classifiers import MembershipScore
    score_objs = [MembershipScore.from_score(s, clf.threshold) for s in scores]
    labels = [Membership.MEMBER if l == 1.0 else Membership.EXTERNAL for l in test.labels]
    accuracy = compute_accuracy(score_objs, labels)

    out.mkdir(parents=True, exist_ok=True)
    model_id = _opt(args, cfg_file, "model-id", "toy")
    audited_base = "audited"
    save_audited_model(model, out / audited_base)
    clf_base = f"mint_{arch}_{kind.tag}"
    save_classifier(clf, out / clf_base)
    register_classifier(out, model_id, audited_base, clf_base)
    print(f"classifier {clf_base} written to {out} "
          f"(train accuracy {metrics.final_accuracy:.3f}, "
          f"held-out accuracy {accuracy:.3f})")
    return 0


def cmd_evaluate(args) -> int:
    cfg_file = _load_config_file(args.config)
    data_dir = _require_path(_opt(args, cfg_file, "data", "data"), "dataset")
    model = _load_model(_opt(args, cfg_file, "model", "model"))
    out = Path(_opt(args, cfg_file, "out", "reports"))
    run_id = _opt(args, cfg_file, "run-id", "run")

    architectures = tuple(_opt(args, cfg_file, "arch", "vanilla").split(","))
    grid = ExperimentGrid(
        kinds=_parse_kinds(_opt(args, cfg_file, "kinds", "all")),
        train_sizes=tuple(int(s) for s in str(_opt(args, cfg_file, "sizes", "250,1000,2000")).split(",")),
        architectures=architectures,
        repetitions=_opt(args, cfg_file, "reps", 3),
        seed=_opt(args, cfg_file, "seed", 0),
    )
    partition = load_dataset(data_dir)
    control_config = load_dataset_config(data_dir)
    table, controls = run_grid(
        grid, model, partition,
        test_size=_opt(args, cfg_file, "test-size", 1000),
        control_config=control_config)
    paths = write_report_files(table, controls, out, run_id)
    print(f"reports written: {paths['md']}, {paths['csv']}, {paths['json']}")
    return 0


def cmd_report(args) -> int:
    cfg_file = _load_config_file(args.config)
    run_path = _require_path(_opt(args, cfg_file, "run", "reports/run.run.json"), "run file")
    fmt = _opt(args, cfg_file, "format", "md")
    table, controls = table_from_json(json.loads(Path(run_path).read_text()))
    document = emit_report(table, controls, fmt)
    out = _opt(args, cfg_file, "out", None)
    if out:
        Path(out).write_text(document)
        print(f"report written to {out}")
    else:
        print(document)
    return 0


def cmd_serve(args) -> int:
    from .service import serve_audit

    cfg_file = _load_config_file(args.config)
    registry_dir = _require_path(_opt(args, cfg_file, "registry", "registry"), "registry")
    _require_path(Path(registry_dir) / "registry.json", "registry index")
    registry = AuditRegistry.load(registry_dir)
    static = _opt(args, cfg_file, "static", None)
    serve_audit(
        registry,
        host=_opt(args, cfg_file, "host", "127.0.0.1"),
        port=_opt(args, cfg_file, "port", 8000),
        retain_uploads=bool(_opt(args, cfg_file, "retain-uploads", False)),
        upload_dir=_opt(args, cfg_file, "upload-dir", "uploads"),
        static_dir=static,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mintaudit",
        description="Membership-inference audit pipeline and demonstrator service")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file (overridden by flags)")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("gen-data", help="generate the synthetic member/external dataset")
    common(p)
    p.add_argument("--classes", type=int)
    p.add_argument("--samples-per-class", type=int)
    p.add_argument("--external", type=int)
    p.add_argument("--image-size", type=int)
    p.add_argument("--channels", type=int)
    p.add_argument("--offset", type=float,
                   help="member/external generator offset (0 = identical distributions)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-audited", help="train the audited model on member samples")
    common(p)
    p.add_argument("--data")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--embedding-dim", type=int)
    p.set_defaults(func=cmd_train_audited)

    p = sub.add_parser("extract", help="extract auditable-data feature caches")
    common(p)
    p.add_argument("--data")
    p.add_argument("--model")
    p.add_argument("--maps", action="store_const", const=True,
                   help="also write full-map caches for the CNN classifier")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train-mint", help="train one audit classifier into a registry")
    common(p)
    p.add_argument("--features")
    p.add_argument("--model")
    p.add_argument("--model-id")
    p.add_argument("--kind", help="auditable data tag, e.g. all_conv_layers")
    p.add_argument("--arch", choices=[VANILLA, CNN])
    p.add_argument("--train-size", type=int)
    p.add_argument("--test-size", type=int)
    p.set_defaults(func=cmd_train_mint)

    p = sub.add_parser("evaluate", help="run the experiment grid and write reports")
    common(p)
    p.add_argument("--data")
    p.add_argument("--model")
    p.add_argument("--kinds", help='"all", "conv" or comma-separated tags')
    p.add_argument("--sizes", help="comma-separated train sizes")
    p.add_argument("--arch", help="comma-separated architectures (vanilla,cnn)")
    p.add_argument("--reps", type=int)
    p.add_argument("--test-size", type=int)
    p.add_argument("--run-id")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="re-emit a report from a saved run.json")
    common(p)
    p.add_argument("--run")
    p.add_argument("--format", choices=["md", "markdown", "csv", "json"])
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="serve the audit HTTP API")
    common(p)
    p.add_argument("--registry")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--retain-uploads", action="store_const", const=True,
                   help="persist uploaded images (off by default)")
    p.add_argument("--upload-dir")
    p.add_argument("--static", help="directory of web UI assets to serve at /")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MissingPrerequisite as exc:
        _fail("missing_prerequisite", "required artifact does not exist", path=exc.path)
        return 2
    except (ValueError, KeyError, OSError) as exc:
        _fail("invalid_input", str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
