"""Pipeline stages. Each ``cmd_*`` reads its inputs from, and writes its
outputs to, a run directory, so stages compose through files only.

Run directory layout::

    config.json                    resolved configuration
    data/{train,test,kappa,ood}.xds
    models/<id>.json
    adv/<attack-label>.jsonl       adversarial batches (cmd_attack)
    threat/adv-<group>.jsonl       ensemble-attack batches (cmd_threat)
    verdicts/<defense>/<source>.jsonl
    reports/<table>.{csv,json[,dat]}
"""

from __future__ import annotations

import dataclasses
import json
from functools import partial
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .. import attacks as atk
from .. import defense as dfn
from .. import diversity as dv
from .. import metrics as mt
from .. import nncore as nn
from .. import synthdata as sd
from .config import ConfigError, DataError, ExperimentConfig, derive_seed, dump_config
from .reports import Table, make_table, read_table_json, write_table
from .workers import ordered_map

DATASETS = ("train", "test", "kappa", "ood")
ATTACK_COLUMNS = ("ASR", "MR", "AdvConf", "Perturb", "Percept", "Time")
OUTPUT_ONLY, KAPPA_RAND, BEST_KAPPA, NO_DEFENSE = (
    "output-only", "xensemble-kappa-rand", "xensemble-best-kappa", "no-defense")


# --- run directory helpers -----------------------------------------------------

class Run:
    def __init__(self, cfg: ExperimentConfig, out: Optional[str] = None):
        self.cfg = cfg
        self.root = Path(out or cfg.out_dir)

    def path(self, *parts) -> Path:
        return self.root.joinpath(*parts)

    def ensure(self, *parts) -> Path:
        p = self.path(*parts)
        p.mkdir(parents=True, exist_ok=True)
        return p

    @property
    def reports(self) -> Path:
        return self.ensure("reports")

    def dataset(self, name: str) -> sd.Dataset:
        p = self.path("data", f"{name}.xds")
        if not p.exists():
            raise DataError(f"missing dataset {p}; run gen-data first")
        try:
            return sd.load_dataset(p)
        except sd.DatasetFormatError as exc:
            raise DataError(f"{p}: {exc}") from None

    def models(self) -> dict:
        out = {}
        for mid in self.cfg.pool.ids:
            p = self.path("models", f"{mid}.json")
            if not p.exists():
                raise DataError(f"missing model {p}; run train-pool first")
            try:
                out[mid] = nn.load_model(p)
            except (ValueError, KeyError, TypeError) as exc:
                raise DataError(f"{p}: {exc}") from None
        d = self.cfg.data
        for mid, m in out.items():
            if m.input_dim != d.side * d.side or m.num_classes != d.num_classes:
                raise DataError(f"model {mid} does not match the configured data shape")
        return out

    def table(self, name: str) -> Table:
        p = self.path("reports", f"{name}.json")
        if not p.exists():
            raise DataError(f"missing report {p}")
        try:
            return read_table_json(p)
        except (ValueError, KeyError) as exc:
            raise DataError(f"{p}: {exc}") from None

    def write(self, table: Table, dat_columns: Optional[Sequence[str]] = None) -> Table:
        write_table(table, self.reports, dat_columns)
        return table

    def record_config(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        dump_config(self.cfg, self.path("config.json"))


def _seed(cfg: ExperimentConfig, *tags) -> int:
    return derive_seed(cfg.seed, *tags)


def _time(cfg: ExperimentConfig, t: float) -> float:
    return float(t) if cfg.timing == "wall" else 0.0


# --- gen-data ----------------------------------------------------------------------

def cmd_gen_data(cfg: ExperimentConfig, out: Optional[str] = None, workers: int = 1) -> list[Table]:
    run = Run(cfg, out)
    run.record_config()
    d = cfg.data
    sets = {
        "train": sd.gen_in_distribution(d.num_classes, d.train_per_class, d.side, d.noise_sigma,
                                        _seed(cfg, "data", "train"), name="train"),
        "test": sd.gen_in_distribution(d.num_classes, d.test_per_class, d.side, d.noise_sigma,
                                       _seed(cfg, "data", "test"), name="test"),
        "kappa": sd.gen_in_distribution(d.num_classes, d.kappa_per_class, d.side, d.noise_sigma,
                                        _seed(cfg, "data", "kappa"), name="kappa"),
        "ood": sd.gen_ood(d.side, d.ood_count, _seed(cfg, "data", "ood"), d.num_classes, name="ood"),
    }
    run.ensure("data")
    rows = []
    for name, ds in sets.items():
        sd.save_dataset(ds, run.path("data", f"{name}.xds"))
        rows.append({"dataset": name, "kind": ds.kind, "count": len(ds), "side": d.side,
                     "num_classes": d.num_classes})
    return [run.write(make_table("datasets", ("dataset", "kind", "count", "side", "num_classes"), rows))]


# --- train-pool --------------------------------------------------------------------

def _train_one(spec, cfg: ExperimentConfig, X: np.ndarray, y: np.ndarray) -> nn.MicroModel:
    d, p = cfg.data, cfg.pool
    model = nn.init_model([d.side * d.side, *spec.hidden, d.num_classes],
                          seed=_seed(cfg, "init", spec.id, spec.seed), init_scale=p.init_scale)
    tc = nn.TrainConfig(epochs=p.train.epochs, batch_size=p.train.batch_size,
                        learning_rate=p.train.learning_rate, momentum=p.train.momentum,
                        seed=_seed(cfg, "train", spec.id, spec.seed))
    return nn.train(model, (X, y), tc)


def kappa_inputs(cfg: ExperimentConfig, models: dict, kappa_set: sd.Dataset,
                 test: sd.Dataset) -> np.ndarray:
    """Inputs the pool's kappa matrix is measured on.

    ``negative``: for every held-out image, an FGSM example against one pool
    member (round robin over the pool) plus a Gaussian-corrupted copy.
    ``benign``: the clean test images.
    """
    if cfg.kappa.source == "benign":
        return test.flat
    ids = cfg.pool.ids
    rng = np.random.default_rng(_seed(cfg, "kappa", "noise"))
    fg = atk.AttackConfig("fgsm", epsilon=cfg.kappa.epsilon)
    out = []
    for i, (x, y) in enumerate(zip(kappa_set.images, kappa_set.labels)):
        ex = atk.fgsm(models[ids[i % len(ids)]], x, int(y), fg)
        out.append(np.asarray(ex.perturbed).reshape(-1))
        noisy = np.clip(x + rng.normal(0.0, cfg.kappa.noise_sigma, size=x.shape), 0.0, 1.0)
        out.append(noisy.reshape(-1))
    return np.stack(out)


def cmd_train_pool(cfg: ExperimentConfig, out: Optional[str] = None, workers: int = 1) -> list[Table]:
    run = Run(cfg, out)
    train, test = run.dataset("train"), run.dataset("test")
    specs = cfg.pool.specs
    trained = ordered_map(partial(_train_one, cfg=cfg, X=train.flat, y=train.labels), specs, workers)
    run.ensure("models")
    models = {}
    for spec, model in zip(specs, trained):
        nn.save_model(model, run.path("models", f"{spec.id}.json"))
        models[spec.id] = model

    tm_acc = nn.accuracy(models[cfg.pool.target.id], test.flat, test.labels)
    rows = []
    for spec in specs:
        acc = nn.accuracy(models[spec.id], test.flat, test.labels)
        rows.append({"model": spec.id, "hidden": "x".join(map(str, spec.hidden)), "accuracy": acc,
                     "delta_vs_target": acc - tm_acc,
                     "within_band": bool(abs(acc - tm_acc) <= cfg.pool.accuracy_band)})
    acc_table = make_table("benign_accuracy", ("model", "hidden", "accuracy", "delta_vs_target", "within_band"),
                           rows)

    X = kappa_inputs(cfg, models, run.dataset("kappa"), test)
    ids = cfg.pool.ids
    kmat = dv.kappa_matrix([nn.predict_labels(models[m], X) for m in ids], cfg.data.num_classes)
    run.reports.joinpath("kappa_matrix.csv").write_text(dv.kappa_matrix_csv(kmat, ids))
    krows = [{"model": a, **{b: float(kmat[i, j]) for j, b in enumerate(ids)}} for i, a in enumerate(ids)]
    kappa_table = make_table("kappa_matrix", ("model", *ids), krows)
    run.reports.joinpath("kappa_matrix.json").write_text(json.dumps(
        {"name": "kappa_matrix", "columns": ["model", *ids], "rows": krows}, indent=2) + "\n")
    return [run.write(acc_table), kappa_table]


def load_kappa(run: Run) -> tuple[list[str], np.ndarray]:
    t = run.table("kappa_matrix")
    ids = list(t.columns[1:])
    if ids != run.cfg.pool.ids:
        raise DataError("kappa matrix ids do not match the configured pool")
    kmat = np.array([[float(r[b]) for b in ids] for r in t.rows])
    return ids, kmat


# --- rank-ensembles ------------------------------------------------------------------

def _team_accuracy(models: dict, team: Sequence[str], X: np.ndarray, y: np.ndarray) -> float:
    """Plurality accuracy of ``team`` on clean inputs (no-consensus counts as wrong)."""
    probs = [nn.predict_proba(models[m], X) for m in team]
    hits = 0
    for q in range(X.shape[0]):
        res = dfn.consensus([p[q] for p in probs], "plurality")
        hits += int(res.label is not None and res.label == y[q])
    return hits / X.shape[0]


def build_teams(cfg: ExperimentConfig, ids: list[str], kmat: np.ndarray,
                sizes: Optional[Sequence[int]]) -> list[dv.EnsembleTeam]:
    target = cfg.pool.target.id
    return dv.candidate_teams(target, [m for m in ids if m != target], kmat, ids,
                              sizes=None if sizes is None else tuple(sizes))


def cmd_rank_ensembles(cfg: ExperimentConfig, out: Optional[str] = None, workers: int = 1) -> list[Table]:
    run = Run(cfg, out)
    ids, kmat = load_kappa(run)
    models, test = run.models(), run.dataset("test")
    try:
        ranked = dv.rank_teams(build_teams(cfg, ids, kmat, cfg.defense.team_sizes), cfg.defense.kappa_threshold)
    except dv.EmptyPoolError as exc:
        raise ConfigError(str(exc)) from None
    rows = []
    for rank, t in enumerate(ranked, 1):
        rows.append({"rank": rank, "members": "+".join(t.member_ids), "size": t.size, "kappa_avg": t.kappa_avg,
                     "benign_acc": _team_accuracy(models, t.member_ids, test.flat, test.labels)})
    return [run.write(make_table("teams", ("rank", "members", "size", "kappa_avg", "benign_acc"), rows))]


def load_teams(run: Run) -> list[dv.EnsembleTeam]:
    t = run.table("teams")
    teams = []
    for r in t.rows:
        members = tuple(r["members"].split("+"))
        unknown = [m for m in members if m not in run.cfg.pool.ids]
        if unknown:
            raise DataError(f"team table references unknown models {unknown}")
        teams.append(dv.EnsembleTeam(members, float(r["kappa_avg"]), r.get("benign_acc")))
    if not teams:
        raise DataError("team table is empty")
    return teams


# --- attack ------------------------------------------------------------------------------

def first_correct(model: nn.MicroModel, ds: sd.Dataset, n: int) -> list[int]:
    """Indices of the first ``n`` test inputs ``model`` classifies correctly."""
    pred = nn.predict_labels(model, ds.flat)
    return [i for i in range(len(ds)) if pred[i] == ds.labels[i]][:n]


def _attack_item(item, models: Sequence[nn.MicroModel], acfg: atk.AttackConfig):
    x, y, seed = item
    return atk.run_attack(list(models), x, int(y), acfg.with_seed(seed))


def run_attack_batch(cfg: ExperimentConfig, models: Sequence[nn.MicroModel], acfg: atk.AttackConfig,
                     ds: sd.Dataset, idx: Sequence[int], tag: str, workers: int) -> list:
    items = [(ds.images[i], int(ds.labels[i]), _seed(cfg, "attack", tag, int(i))) for i in idx]
    return ordered_map(partial(_attack_item, models=tuple(models), acfg=acfg), items, workers)


def _report_row(cfg: ExperimentConfig, examples: list, model: nn.MicroModel) -> tuple[dict, atk.AttackReport]:
    if not examples:
        rep = atk.AttackReport(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0, 0)
    else:
        rep = atk.evaluate_attack(examples, model)
    row = rep.as_row()
    row["Time"] = _time(cfg, row["Time"])
    return row, rep


def cmd_attack(cfg: ExperimentConfig, out: Optional[str] = None, workers: int = 1) -> list[Table]:
    run = Run(cfg, out)
    test = run.dataset("test")
    tm = run.models()[cfg.pool.target.id]
    idx = first_correct(tm, test, cfg.attack.count)
    run.ensure("adv")
    rows, counts = [], []
    for entry in cfg.attack.attacks:
        ex = run_attack_batch(cfg, [tm], entry.config, test, idx, entry.label, workers)
        atk.save_adv_batch(run.path("adv", f"{entry.label}.jsonl"), ex, [f"test:{i}" for i in idx],
                           ids=[f"{entry.label}-{i}" for i in idx], record_time=cfg.timing == "wall")
        row, rep = _report_row(cfg, ex, tm)
        rows.append({"attack": entry.label, **row})
        counts.append({"attack": entry.label, "kind": entry.config.kind, "target_mode": entry.config.target_mode,
                       "count": rep.count, "successes": rep.successes, "zero_success": rep.zero_success})
    tables = [run.write(make_table("attacks", ("attack", *ATTACK_COLUMNS), rows)),
              run.write(make_table("attack_counts", ("attack", "kind", "target_mode", "count", "successes",
                                                     "zero_success"), counts))]

    sweep = []
    for k, eps in enumerate(cfg.attack.fgsm_sweep):
        ex = run_attack_batch(cfg, [tm], atk.AttackConfig("fgsm", epsilon=eps), test, idx, f"sweep{k}", workers)
        row, _ = _report_row(cfg, ex, tm)
        sweep.append({"epsilon": float(eps), "ASR": row["ASR"], "Perturb": row["Perturb"],
                      "Percept": row["Percept"]})
    tables.append(run.write(make_table("fgsm_sweep", ("epsilon", "ASR", "Perturb", "Percept"), sweep),
                            dat_columns=("epsilon", "ASR", "Perturb", "Percept")))
    return tables


def load_attack_batches(run: Run, test: sd.Dataset) -> dict:
    out = {}
    for entry in run.cfg.attack.attacks:
        p = run.path("adv", f"{entry.label}.jsonl")
        if not p.exists():
            raise DataError(f"missing adversarial batch {p}; run attack first")
        try:
            out[entry.label] = atk.load_adv_batch(p, test)
        except ValueError as exc:
            raise DataError(str(exc)) from None
    return out


# --- defend ------------------------------------------------------------------------------

def defense_configs(cfg: ExperimentConfig) -> dict:
    d = cfg.defense
    common = dict(consensus_rule=d.consensus_rule, confidence_level=d.confidence_level,
                  include_target_vote=d.include_target_vote, top_m=d.top_m, seed=_seed(cfg, "defense"))
    den = cfg.denoiser_specs
    return {
        OUTPUT_ONLY: dfn.DefenseConfig(denoisers=(), team_policy="best", **common),
        KAPPA_RAND: dfn.DefenseConfig(denoisers=den, team_policy="random-top-m", **common),
        BEST_KAPPA: dfn.DefenseConfig(denoisers=den, team_policy="best", **common),
    }


def _export_verdicts(path: Path, verdicts: Sequence[dfn.Verdict], ids: Sequence[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for vid, v in zip(ids, verdicts):
            fh.write(json.dumps({"id": vid, "outcome": v.outcome, "label": v.label,
                                 "agreement": v.agreement, "detection_score": v.detection_score}) + "\n")


def _rates_row(defense: str, source: str, verdicts, truth) -> dict:
    r = mt.defense_rates(verdicts, truth)
    return {"defense": defense, "source": source, "count": len(verdicts), "DSR": r.dsr, "PSR": r.psr, "TSR": r.tsr}


def _pooled_row(defense: str, rows: list[dict]) -> dict:
    """Attack-average cell from pooled integer counts, so DSR = PSR + TSR exactly."""
    n = sum(r["count"] for r in rows)
    repaired = sum(round(r["PSR"] * r["count"]) for r in rows)
    flagged = sum(round(r["TSR"] * r["count"]) for r in rows)
    psr, tsr = repaired / n, flagged / n
    return {"defense": defense, "source": "attack-average", "count": n, "DSR": psr + tsr, "PSR": psr, "TSR": tsr}


def cmd_defend(cfg: ExperimentConfig, out: Optional[str] = None, workers: int = 1) -> list[Table]:
    run = Run(cfg, out)
    test, ood = run.dataset("test"), run.dataset("ood")
    models = run.models()
    tm_id = cfg.pool.target.id
    tm = models[tm_id]
    pool = dfn.TeamPool(models, tm_id, load_teams(run))
    batches = load_attack_batches(run, test)

    sources = [("benign", list(test.images), [int(v) for v in test.labels], [f"test:{i}" for i in range(len(test))])]
    for label, (ex, recs) in batches.items():
        sources.append((label, [e.perturbed for e in ex], [e.true_label for e in ex], [r["id"] for r in recs]))
    sources.append(("ood", list(ood.images), [None] * len(ood), [f"ood:{i}" for i in range(len(ood))]))

    defenses = [(NO_DEFENSE, lambda xs: dfn.undefended_verdicts(xs, tm))]
    for vid in cfg.pool.ids[1:]:
        defenses.append((f"single-{vid}", partial(dfn.single_model_verdicts, model=models[vid])))
    for name, dcfg in defense_configs(cfg).items():
        defenses.append((name, partial(dfn.defend_batch, target_model=tm, pool=pool, cfg=dcfg)))

    rows, benign_rows = [], []
    for dname, fn in defenses:
        attack_rows = []
        for sname, xs, truth, ids in sources:
            verdicts = fn(xs) if xs else []
            _export_verdicts(run.path("verdicts", dname, f"{sname}.jsonl"), verdicts, ids)
            if not verdicts:
                continue
            row = _rates_row(dname, sname, verdicts, truth)
            rows.append(row)
            if sname not in ("benign", "ood"):
                attack_rows.append(row)
            if sname == "benign":
                kept = [(v, y) for v, y in zip(verdicts, truth) if not v.flagged]
                benign_rows.append({"defense": dname,
                                    "accuracy": sum(v.label == y for v, y in zip(verdicts, truth)) / len(truth),
                                    "accuracy_if_not_flagged": (sum(v.label == y for v, y in kept) / len(kept)
                                                                if kept else 0.0),
                                    "flag_rate": 1.0 - len(kept) / len(truth)})
        if attack_rows:
            rows.append(_pooled_row(dname, attack_rows))
    return [run.write(make_table("defense", ("defense", "source", "count", "DSR", "PSR", "TSR"), rows)),
            run.write(make_table("benign", ("defense", "accuracy", "accuracy_if_not_flagged", "flag_rate"),
                                 benign_rows))]


# --- ood -----------------------------------------------------------------------------

def ood_family(index: int) -> str:
    """OOD sets cycle through the template families in order."""
    return sd.OOD_TEMPLATE_IDS[index % len(sd.OOD_TEMPLATE_IDS)]


def cmd_ood(cfg: ExperimentConfig, out: Optional[str] = None, workers: int = 1) -> list[Table]:
    run = Run(cfg, out)
    test, ood = run.dataset("test"), run.dataset("ood")
    if len(ood) == 0 or ood.kind != sd.OUT_OF_DISTRIBUTION:
        raise DataError("AUROC is undefined without out-of-distribution inputs")
    models = run.models()
    tm_id = cfg.pool.target.id
    pool = dfn.TeamPool(models, tm_id, load_teams(run))
    confs = {k: dataclasses.replace(v, include_target_vote=cfg.defense.ood_target_vote)
             for k, v in defense_configs(cfg).items()}
    rows, score_rows = [], []
    for dname in (OUTPUT_ONLY, BEST_KAPPA):
        vb = dfn.defend_batch(list(test.images), models[tm_id], pool, confs[dname])
        vo = dfn.defend_batch(list(ood.images), models[tm_id], pool, confs[dname])
        fams = [ood_family(i) for i in range(len(ood))]
        groups = [("all", list(range(len(ood))))]
        groups += [(f, [i for i in range(len(ood)) if fams[i] == f]) for f in sd.OOD_TEMPLATE_IDS]
        for gname, members in groups:
            if not members:
                continue
            sel = [vo[i] for i in members]
            flags = [v.flagged for v in vb] + [v.flagged for v in sel]
            scores = [v.detection_score for v in vb] + [v.detection_score for v in sel]
            pos = [False] * len(vb) + [True] * len(sel)
            st = mt.detection_stats(flags, scores, pos)
            dsr = mt.defense_rates(sel, [None] * len(sel)).dsr
            rows.append({"defense": dname, "source": gname, "count": len(sel), "DSR": dsr, "DError": st.derror,
                         "AUROC": st.auroc, "FPR@95TPR": st.fpr_at_95tpr, "TPR": st.tpr, "FPR": st.fpr})
        if dname == BEST_KAPPA:
            score_rows += [{"index": i, "is_ood": 0, "source": "benign", "detection_score": v.detection_score}
                           for i, v in enumerate(vb)]
            score_rows += [{"index": i, "is_ood": 1, "source": fams[i], "detection_score": v.detection_score}
                           for i, v in enumerate(vo)]
    tables = [run.write(make_table("ood", ("defense", "source", "count", "DSR", "DError", "AUROC", "FPR@95TPR",
                                           "TPR", "FPR"), rows))]
    tables.append(run.write(make_table("ood_scores", ("index", "is_ood", "source", "detection_score"), score_rows),
                            dat_columns=("index", "is_ood", "detection_score")))
    return tables


# --- threat -----------------------------------------------------------------------------

def threat_groups(cfg: ExperimentConfig) -> dict:
    """Exposed model ids per attacker knowledge level."""
    return {"black": (cfg.pool.target.id,), "grey": tuple(cfg.threat.grey_exposed), "white": tuple(cfg.pool.ids)}


def threat_teams(cfg: ExperimentConfig, ids: list[str], kmat: np.ndarray) -> tuple[list, dict]:
    """All teams of the threat size (lexicographic) and, per mode, the fixed teams to average over."""
    teams = sorted(build_teams(cfg, ids, kmat, [cfg.threat.team_size]), key=lambda t: t.member_ids)
    fixed = {}
    for g, exposed in threat_groups(cfg).items():
        if cfg.threat.fixed_team is not None:
            want = tuple(sorted(cfg.threat.fixed_team))
            fixed[g] = [t for t in teams if t.member_ids == want]
        else:
            holding = [t for t in teams if set(exposed) <= set(t.member_ids)]
            # white-box exposes more models than a team holds: every team is known
            fixed[g] = holding or teams
    if not fixed["grey"]:
        raise ConfigError("no team of the threat size contains the grey exposure")
    return teams, fixed


def cmd_threat(cfg: ExperimentConfig, out: Optional[str] = None, workers: int = 1) -> list[Table]:
    run = Run(cfg, out)
    test = run.dataset("test")
    models = run.models()
    ids, kmat = load_kappa(run)
    tm_id = cfg.pool.target.id
    tm = models[tm_id]
    teams, fixed = threat_teams(cfg, ids, kmat)
    idx = first_correct(tm, test, cfg.threat.count)
    groups = threat_groups(cfg)
    needed = sorted({m.split("-")[0] for m in cfg.threat.modes}, key=list(groups).index)

    run.ensure("threat")
    batches = {}
    for g in needed:
        ex = run_attack_batch(cfg, [models[m] for m in groups[g]], cfg.threat.attack, test, idx, f"threat-{g}",
                              workers)
        atk.save_adv_batch(run.path("threat", f"adv-{g}.jsonl"), ex, [f"test:{i}" for i in idx],
                           ids=[f"{g}-{i}" for i in idx], record_time=cfg.timing == "wall")
        batches[g] = ex

    d = cfg.defense
    common = dict(denoisers=(), consensus_rule=d.consensus_rule, confidence_level=d.confidence_level,
                  include_target_vote=cfg.threat.include_target_vote, seed=_seed(cfg, "threat", "teams"))
    rand_cfg = dfn.DefenseConfig(team_policy="random-top-m", top_m=len(teams), **common)
    fix_cfg = dfn.DefenseConfig(team_policy="best", **common)
    rows = []
    for mode in cfg.threat.modes:
        g = mode.split("-")[0]
        ex = batches[g]
        randomised = mode.endswith("rand")
        serving = [teams] if randomised else [[t] for t in fixed[g]]
        if randomised:
            label = f"random-of-{len(teams)}"
        elif len(serving) == 1:
            label = "+".join(serving[0][0].member_ids)
        else:
            label = f"mean-of-{len(serving)}"
        row = {"mode": mode, "exposed": "+".join(groups[g]), "team": label, "count": len(ex)}
        if ex:
            xs, truth = [e.perturbed for e in ex], [e.true_label for e in ex]
            per_team = [mt.defense_rates(dfn.defend_batch(xs, tm, dfn.TeamPool(models, tm_id, ts),
                                                          rand_cfg if randomised else fix_cfg), truth)
                        for ts in serving]
            dsr = [r.dsr for r in per_team]
            succ = [e for e in ex if e.success]
            row.update({"DSR": float(np.mean(dsr)), "DSR_min": min(dsr), "DSR_max": max(dsr),
                        "PSR": float(np.mean([r.psr for r in per_team])),
                        "TSR": float(np.mean([r.tsr for r in per_team])),
                        "ASR": len(succ) / len(ex),
                        "DistPerturb": float(np.mean([atk.rmsd(e.original, e.perturbed) for e in ex])),
                        "DistPercept": float(np.mean([atk.percept_distance(e.original, e.perturbed) for e in ex])),
                        "Time": _time(cfg, float(np.mean([e.gen_time_s for e in ex])))})
        else:
            row.update({k: 0.0 for k in THREAT_METRICS})
        rows.append(row)
    return [run.write(make_table("threat", ("mode", "exposed", "team", "count") + THREAT_METRICS, rows))]


THREAT_METRICS = ("DSR", "DSR_min", "DSR_max", "PSR", "TSR", "ASR", "DistPerturb", "DistPercept", "Time")


# --- report ------------------------------------------------------------------------------

def cmd_report(cfg: ExperimentConfig, out: Optional[str] = None, workers: int = 1) -> list[Table]:
    """Headline numbers gathered from whichever stage reports exist."""
    run = Run(cfg, out)
    rows = []

    def add(section, key, value):
        rows.append({"section": section, "key": key, "value": float(value)})

    found = 0
    if run.path("reports", "benign_accuracy.json").exists():
        found += 1
        for r in run.table("benign_accuracy").rows:
            add("benign-accuracy", r["model"], r["accuracy"])
    if run.path("reports", "fgsm_sweep.json").exists():
        found += 1
        for r in run.table("fgsm_sweep").rows:
            add("fgsm-sweep-asr", f"{r['epsilon']:g}", r["ASR"])
    if run.path("reports", "attacks.json").exists():
        found += 1
        for r in run.table("attacks").rows:
            add("attack-asr", r["attack"], r["ASR"])
    if run.path("reports", "defense.json").exists():
        found += 1
        for r in run.table("defense").rows:
            if r["source"] == "attack-average":
                add("defense-avg-dsr", r["defense"], r["DSR"])
    if run.path("reports", "ood.json").exists():
        found += 1
        for r in run.table("ood").rows:
            if r["source"] == "all":
                add("ood-derror", r["defense"], r["DError"])
                add("ood-auroc", r["defense"], r["AUROC"])
    if run.path("reports", "threat.json").exists():
        found += 1
        for r in run.table("threat").rows:
            add("threat-dsr", r["mode"], r["DSR"])
    if not found:
        raise DataError(f"no stage reports under {run.path('reports')}")
    return [run.write(make_table("summary", ("section", "key", "value"), rows))]


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-pool": cmd_train_pool,
    "rank-ensembles": cmd_rank_ensembles,
    "attack": cmd_attack,
    "defend": cmd_defend,
    "ood": cmd_ood,
    "threat": cmd_threat,
    "report": cmd_report,
}
PIPELINE_ORDER = ("gen-data", "train-pool", "rank-ensembles", "attack", "defend", "ood", "threat", "report")
