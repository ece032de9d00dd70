"""Command-line interface.

Subcommands: train-kbc, eval-kbc, trace, memory-report, gradcheck,
gen-paths, train-paths, eval-paths. Every run prints its fully resolved
configuration, writes metrics to stdout, and (where it makes sense) to a
JSON report file. Exit code 0 on success; failures print a one-line
diagnostic on stderr and exit nonzero.

The dataset directory for KBC commands holds train.txt / valid.txt /
test.txt with tab-separated head/relation/tail names; IRN_DATA_ROOT is the
default --data value when set.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from . import ranking
from .data import FilterIndex, Vocab, augment_reverse, load_triples, reverse_queries, sample_negatives
from .gradcheck import check_gradients
from .kbc import KbcConfig, KbcModel
from .paths import (
    PathConfig,
    PathModel,
    build_dataset,
    dp_baseline,
    evaluate_paths,
    generate_world,
    load_world,
    save_world,
    train_path_model,
)
from .training import TrainConfig, load_checkpoint, load_into, save_checkpoint, train_kbc


def _data_root(value):
    if value:
        return value
    env = os.environ.get("IRN_DATA_ROOT")
    if env:
        return env
    raise ValueError("no dataset directory: pass --data or set IRN_DATA_ROOT")


def _load_kbc_data(data_dir):
    entities, relations = Vocab(), Vocab()
    splits = {}
    for name in ("train", "valid", "test"):
        path = os.path.join(data_dir, f"{name}.txt")
        if not os.path.exists(path):
            raise FileNotFoundError(f"missing dataset file {path}")
        triples, dups = load_triples(path, entities, relations)
        if dups:
            print(f"note: {path}: dropped {dups} duplicate triples")
        splits[name] = triples
    return entities, relations, splits


def _log_config(args, parser_name):
    shown = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    print(f"{parser_name} config: {json.dumps(shown, sort_keys=True)}")


def _write_report(path, payload):
    if not path:
        return
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"report written to {path}")


def _kbc_config_from_args(args, n_entities, n_relations_augmented):
    return KbcConfig(
        n_entities=n_entities,
        n_relations=n_relations_augmented,
        entity_dim=args.entity_dim,
        relation_dim=args.relation_dim,
        memory_size=args.memory_size,
        memory_dim=args.memory_dim,
        t_max=args.t_max,
        gamma=args.gamma,
        attention_lambda=args.attention_lambda,
        n_negatives=args.negatives,
        init_scale=args.init_scale,
        tie_entities=args.tie_entities,
        gate_bias_init=args.gate_bias_init,
    )


def _restore_kbc(checkpoint, data_dir):
    meta, arrays = load_checkpoint(checkpoint)
    if meta.get("kind") != "kbc":
        raise ValueError(f"{checkpoint}: checkpoint kind {meta.get('kind')!r}, expected 'kbc'")
    entities, relations, splits = _load_kbc_data(data_dir)
    config = KbcConfig(**meta["config"])
    if config.n_entities != len(entities):
        raise ValueError(
            f"entity table size mismatch: checkpoint has {config.n_entities} input-entity rows, "
            f"dataset has {len(entities)} entities"
        )
    if meta["n_original_relations"] != len(relations):
        raise ValueError(
            f"relation table size mismatch: checkpoint has {meta['n_original_relations']} original "
            f"relations, dataset has {len(relations)}"
        )
    model = KbcModel(config, np.random.default_rng(0))
    load_into(model.params(), arrays)
    return meta, model, entities, relations, splits


def cmd_train_kbc(args):
    data_dir = _data_root(args.data)
    entities, relations, splits = _load_kbc_data(data_dir)
    n_rel = len(relations)
    train = augment_reverse(splits["train"], n_rel)
    filter_index = FilterIndex(list(splits.values()), n_rel)
    config = _kbc_config_from_args(args, len(entities), 2 * n_rel)
    model = KbcModel(config, np.random.default_rng(args.seed))
    tc = TrainConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        seed=args.seed,
        grad_clip=args.clip,
        patience=args.patience,
        eval_threads=args.threads,
    )
    result = train_kbc(model, train, splits["valid"], filter_index, n_rel, tc, log=print)
    meta = {
        "kind": "kbc",
        "config": asdict(config),
        "train_config": asdict(tc),
        "n_original_relations": n_rel,
        "vocab_sizes": {"entities": len(entities), "relations": n_rel},
        "epoch": result.best_epoch,
        "rng_state": result.rng_state,
    }
    save_checkpoint(args.out, model.params(), meta)
    print(f"best epoch {result.best_epoch} valid hits@10 {result.best_hits10:.4f}")
    print(f"checkpoint written to {args.out}")
    _write_report(args.report, {
        "command": "train-kbc",
        "config": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "history": [
            {"epoch": e, "train_loss": l, "valid_hits_at_10": h} for e, l, h in result.history
        ],
        "best": {"epoch": result.best_epoch, "valid_hits_at_10": result.best_hits10},
    })
    return 0


def cmd_eval_kbc(args):
    data_dir = _data_root(args.data)
    if args.checkpoint:
        meta, model, entities, relations, splits = _restore_kbc(args.checkpoint, data_dir)
    else:
        entities, relations, splits = _load_kbc_data(data_dir)
        config = _kbc_config_from_args(args, len(entities), 2 * len(relations))
        model = KbcModel(config, np.random.default_rng(args.seed))
        print("note: no checkpoint given; evaluating a randomly initialized model")
    n_rel = len(relations)
    queries = splits[args.split]
    if queries.shape[0] == 0:
        raise ValueError(f"split {args.split!r} is empty")
    both = np.concatenate([queries, reverse_queries(queries, n_rel)], axis=0)
    filter_index = FilterIndex(list(splits.values()), n_rel)
    t_max = args.t_max if args.t_max else None
    result = ranking.evaluate(model, both, filter_index, threads=args.threads, t_max=t_max)
    print(f"split {args.split}: queries {both.shape[0]} (both directions)")
    print(f"mean rank {result.mean_rank:.4f}")
    print(f"hits@10 {result.hits10:.4f}")
    _write_report(args.report, {
        "command": "eval-kbc",
        "split": args.split,
        "n_queries": int(both.shape[0]),
        "metrics": {"mean_rank": result.mean_rank, "hits_at_10": result.hits10},
        "t_max": t_max if t_max else model.config.t_max,
    })
    return 0


def cmd_trace(args):
    data_dir = _data_root(args.data)
    meta, model, entities, relations, splits = _restore_kbc(args.checkpoint, data_dir)
    n_rel = len(relations)
    for name, vocab in ((args.head, entities), (args.tail, entities)):
        if name not in vocab:
            raise ValueError(f"unknown entity {name!r}")
    relation = args.relation
    if relation.endswith("^-1"):
        base = relation[:-3]
        if base not in relations:
            raise ValueError(f"unknown relation {base!r}")
        rel_id = relations.id(base) + n_rel
    else:
        if relation not in relations:
            raise ValueError(f"unknown relation {relation!r}")
        rel_id = relations.id(relation)
    query = (entities.id(args.head), rel_id, entities.id(args.tail))
    train_aug = augment_reverse(splits["train"], n_rel)
    rel_names = relations.names() + [f"{r}^-1" for r in relations.names()]
    trace = ranking.trace_inference(model, query, train_aug[:, :2], top_k=args.top_k)
    print(ranking.format_trace(trace, entities.names(), rel_names))
    return 0


def cmd_memory_report(args):
    data_dir = _data_root(args.data)
    meta, model, entities, relations, splits = _restore_kbc(args.checkpoint, data_dir)
    n_rel = len(relations)
    train_aug = augment_reverse(splits["train"], n_rel)
    report = ranking.memory_report(model, train_aug[:, :2], k=args.top_k)
    rel_names = relations.names() + [f"{r}^-1" for r in relations.names()]
    print(ranking.format_memory_report(report, rel_names))
    return 0


def cmd_gradcheck(args):
    rng = np.random.default_rng(args.seed)
    if args.task == "kbc":
        config = KbcConfig(
            n_entities=5, n_relations=4, entity_dim=8, relation_dim=8,
            memory_size=4, memory_dim=16, t_max=args.t_max, n_negatives=3,
        )
        model = KbcModel(config, rng)
        heads = np.array([0, 1, 2])
        rels = np.array([0, 1, 3])
        gold = np.array([1, 2, 4])
        negatives = np.stack([sample_negatives(rng, 5, int(g), 3) for g in gold])

        def loss_fn():
            trace = model.machine.unroll(model.encode(heads, rels))
            return model.objective(trace, gold, negatives)
    else:
        config = PathConfig(n_nodes=6, symbol_dim=4, memory_size=3, memory_dim=6, t_max=2)
        model = PathModel(config, rng)
        starts = np.array([0, 1])
        ends = np.array([3, 4])
        gold = np.array([[0, 2, 3], [1, 5, 4]])

        def loss_fn():
            trace = model.machine.unroll(model.encode(starts, ends))
            return model.objective(trace, gold)

    errors = check_gradients(loss_fn, model.params(), step=args.step)
    worst = 0.0
    for name in sorted(errors):
        print(f"{name:32s} max rel err {errors[name]:.3e}")
        worst = max(worst, errors[name])
    print(f"worst {worst:.3e} (tolerance {args.tol:.1e})")
    return 0 if worst <= args.tol else 1


def cmd_gen_paths(args):
    sizes = tuple(int(x) for x in args.sizes.split(","))
    if len(sizes) != 3:
        raise ValueError(f"--sizes needs train,valid,test — got {args.sizes!r}")
    world = generate_world(args.nodes, args.k, args.seed, edge_mode=args.edge_mode)
    build_dataset(world, sizes, args.seed)
    save_world(args.out, world)
    n = {k: len(v) for k, v in world.splits.items()}
    print(f"world: {world.n_nodes} nodes, {len(world.edges)} edges, splits {n}")
    print(f"world written to {args.out}")
    return 0


def cmd_train_paths(args):
    world = load_world(args.world)
    config = PathConfig(
        n_nodes=world.n_nodes,
        symbol_dim=args.symbol_dim,
        memory_size=args.memory_size,
        memory_dim=args.memory_dim,
        t_max=args.t_max,
        attention_lambda=args.attention_lambda,
        init_scale=args.init_scale,
    )
    model = PathModel(config, np.random.default_rng(args.seed))
    tc = TrainConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        seed=args.seed,
        grad_clip=args.clip,
        patience=args.patience,
        warmup_epochs=args.warmup_epochs,
    )
    result = train_path_model(model, world, tc, log=print)
    meta = {
        "kind": "path",
        "config": asdict(model.config),
        "train_config": asdict(tc),
        "epoch": result.best_epoch,
        "rng_state": result.rng_state,
    }
    save_checkpoint(args.out, model.params(), meta)
    print(f"best epoch {result.best_epoch} valid correct rate {result.best_hits10:.4f}")
    print(f"checkpoint written to {args.out}")
    _write_report(args.report, {
        "command": "train-paths",
        "config": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "history": [
            {"epoch": e, "train_loss": l, "valid_correct_rate": c} for e, l, c in result.history
        ],
        "best": {"epoch": result.best_epoch, "valid_correct_rate": result.best_hits10},
    })
    return 0


def cmd_eval_paths(args):
    world = load_world(args.world)
    instances = world.splits[args.split]
    if not instances:
        raise ValueError(f"split {args.split!r} is empty")
    if args.baseline:
        predictions = dp_baseline(world.splits["train"], instances, world.n_nodes)
        source = "dp-baseline"
    else:
        if not args.checkpoint:
            raise ValueError("pass --checkpoint or --baseline")
        meta, arrays = load_checkpoint(args.checkpoint)
        if meta.get("kind") != "path":
            raise ValueError(f"{args.checkpoint}: checkpoint kind {meta.get('kind')!r}, expected 'path'")
        config = PathConfig(**meta["config"])
        if config.n_nodes != world.n_nodes:
            raise ValueError(
                f"node count mismatch: checkpoint symbol table covers {config.n_nodes} nodes, "
                f"world has {world.n_nodes}"
            )
        model = PathModel(config, np.random.default_rng(0))
        load_into(model.params(), arrays)
        predictions = [model.predict(s, e) for s, e, _ in instances]
        source = args.checkpoint
    stats = evaluate_paths(predictions, instances, world)
    print(f"split {args.split} ({source}): {stats.n_instances} instances")
    print(f"correct {stats.n_correct} ({stats.correct_rate:.4f})")
    print(f"valid {stats.n_valid} ({stats.valid_rate:.4f})")
    _write_report(args.report, {
        "command": "eval-paths",
        "split": args.split,
        "source": source,
        "n_instances": stats.n_instances,
        "metrics": {
            "n_correct": stats.n_correct,
            "n_valid": stats.n_valid,
            "correct_rate": stats.correct_rate,
            "valid_rate": stats.valid_rate,
        },
    })
    return 0


def _add_kbc_model_flags(p):
    p.add_argument("--entity-dim", type=int, default=100, help="entity embedding size (default 100)")
    p.add_argument("--relation-dim", type=int, default=100, help="relation embedding size (default 100)")
    p.add_argument("--memory-size", type=int, default=64, help="memory rows (default 64)")
    p.add_argument("--memory-dim", type=int, default=200, help="memory row size (default 200)")
    p.add_argument("--t-max", type=int, default=5, help="maximum inference steps (default 5)")
    p.add_argument("--gamma", type=float, default=5.0, help="distance sharpening (default 5)")
    p.add_argument("--lambda", dest="attention_lambda", type=float, default=10.0,
                   help="attention sharpening (default 10)")
    p.add_argument("--negatives", type=int, default=20, help="negative samples per query (default 20)")
    p.add_argument("--init-scale", type=float, default=0.08, help="uniform init half-width (default 0.08)")
    p.add_argument("--tie-entities", action="store_true",
                   help="share one entity table for query encoding and answer scoring")
    p.add_argument("--gate-bias-init", type=float, default=0.0,
                   help="starting termination bias; negative spreads stop mass late (default 0)")


def _add_train_flags(p):
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.01, help="SGD learning rate (default 0.01)")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--clip", type=float, default=5.0, help="global gradient-norm clip; <=0 disables")
    p.add_argument("--patience", type=int, default=0, help="early-stop patience in epochs; 0 disables")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="irn",
        description="Iterative memory-guided reasoning: knowledge base completion and path synthesis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-kbc", help="train a KBC model on a triple dataset")
    p.add_argument("--data", help="dataset dir with train/valid/test.txt (default $IRN_DATA_ROOT)")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--report", help="JSON report output path")
    p.add_argument("--threads", type=int, default=1, help="validation scoring threads")
    _add_kbc_model_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train_kbc)

    p = sub.add_parser("eval-kbc", help="filtered MR / Hits@10 on a split (both query directions)")
    p.add_argument("--data", help="dataset dir (default $IRN_DATA_ROOT)")
    p.add_argument("--checkpoint", help="trained checkpoint; omit to evaluate a random init")
    p.add_argument("--split", choices=("valid", "test"), default="test")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--report", help="JSON report output path")
    p.add_argument("--seed", type=int, default=0, help="init seed when no checkpoint is given")
    _add_kbc_model_flags(p)
    p.set_defaults(func=cmd_eval_kbc)

    p = sub.add_parser("trace", help="per-step trace of one query")
    p.add_argument("--data", help="dataset dir (default $IRN_DATA_ROOT)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--head", required=True, help="head entity name")
    p.add_argument("--relation", required=True, help="relation name; append ^-1 for the reverse direction")
    p.add_argument("--tail", required=True, help="gold tail entity name")
    p.add_argument("--top-k", type=int, default=3)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("memory-report", help="top relations per memory cell by mean attention")
    p.add_argument("--data", help="dataset dir (default $IRN_DATA_ROOT)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--top-k", type=int, default=8)
    p.set_defaults(func=cmd_memory_report)

    p = sub.add_parser("gradcheck", help="finite-difference check on a toy model")
    p.add_argument("--task", choices=("kbc", "path"), default="kbc")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-5, help="central-difference half-width")
    p.add_argument("--tol", type=float, default=1e-4, help="max relative error to pass")
    p.add_argument("--t-max", type=int, default=3)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("gen-paths", help="generate a path world and instance splits")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--k", type=int, required=True, help="neighbors per node (or edge budget factor)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sizes", default="2000,500,500", help="train,valid,test instance counts")
    p.add_argument("--edge-mode", choices=("knn", "random"), default="knn")
    p.add_argument("--out", required=True, help="world file output path")
    p.set_defaults(func=cmd_gen_paths)

    p = sub.add_parser("train-paths", help="train the path model on a world file")
    p.add_argument("--world", required=True)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--report", help="JSON report output path")
    p.add_argument("--symbol-dim", type=int, default=64)
    p.add_argument("--memory-size", type=int, default=64)
    p.add_argument("--memory-dim", type=int, default=200)
    p.add_argument("--t-max", type=int, default=5)
    p.add_argument("--lambda", dest="attention_lambda", type=float, default=10.0)
    p.add_argument("--init-scale", type=float, default=0.08)
    p.add_argument("--warmup-epochs", type=int, default=0,
                   help="epochs on the log surrogate before the expected-reward objective")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train_paths)

    p = sub.add_parser("eval-paths", help="evaluate a path checkpoint or the DP baseline")
    p.add_argument("--world", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--baseline", action="store_true", help="evaluate the DP baseline instead")
    p.add_argument("--split", choices=("valid", "test"), default="test")
    p.add_argument("--report", help="JSON report output path")
    p.set_defaults(func=cmd_eval_paths)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _log_config(args, args.command)
    try:
        return args.func(args)
    except Exception as e:  # one-line diagnostic, nonzero exit
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
