"""Command-line surface.

Every command takes an explicit --seed; reports are byte-identical
across runs at the same seed.
"""
from __future__ import annotations

import json
import os

import click
import numpy as np

from . import features as feat
from . import gridworld as gw
from . import inference as inf
from . import model as mdl
from . import observer as obs
from . import planning as pl
from . import server as srv
from . import session as ses


@click.group()
def main() -> None:
    """Reward learning from implicit facial reactions."""


@main.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--episodes", type=int, default=1, show_default=True)
@click.option("--episode-len", type=int, default=gw.EPISODE_LEN, show_default=True)
@click.option("--policy", type=click.Choice(["behavior", "random"]), default="behavior",
              show_default=True)
@click.option("--out", type=click.Path(), required=True, help="Output directory.")
def simulate(seed: int, episodes: int, episode_len: int, policy: str, out: str) -> None:
    """Roll gridworld episodes and write their logs as JSONL."""
    os.makedirs(out, exist_ok=True)
    totals = []
    for i in range(episodes):
        ep_seed = seed + i
        if policy == "behavior":
            pol = pl.BehaviorPolicy.seeded(ep_seed)
        else:
            pol = pl.random_policy(np.random.default_rng(ep_seed))
        log = gw.run_episode(ep_seed, pol, episode_len=episode_len)
        path = os.path.join(out, f"episode_{ep_seed}.jsonl")
        with open(path, "w") as f:
            f.write(log.to_jsonl())
        totals.append({"seed": ep_seed, "return": log.total_reward,
                       "pickups": len(log.pickup_events())})
        click.echo(f"wrote {path} (return {log.total_reward})")
    with open(os.path.join(out, "summary.json"), "w") as f:
        json.dump({"seed": seed, "policy": policy, "episodes": totals}, f,
                  sort_keys=True, indent=1)


@main.command("synth-data")
@click.option("--subjects", type=int, default=8, show_default=True)
@click.option("--episodes", type=int, default=3, show_default=True)
@click.option("--profile", type=click.Choice(sorted(obs.PROFILES)), default="clean",
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--episode-len", type=int, default=gw.EPISODE_LEN, show_default=True)
@click.option("--out", type=click.Path(), required=True, help="Output directory.")
def synth_data(subjects: int, episodes: int, profile: str, seed: int,
               episode_len: int, out: str) -> None:
    """Generate a synthetic observer corpus, a training dataset, and splits."""
    os.makedirs(out, exist_ok=True)
    prof = obs.PROFILES[profile]()
    recordings = ses.synthetic_corpus(subjects, episodes, prof, seed,
                                      episode_len=episode_len)
    for (subject, ep), rec in sorted(recordings.items()):
        rec.save(os.path.join(out, f"{subject}_ep{ep}"))
    dataset = ses.build_dataset(recordings)
    dataset.save(os.path.join(out, "dataset.npz"))
    plan = feat.make_splits(ses.subject_names(subjects), episodes, seed)
    with open(os.path.join(out, "splits.json"), "w") as f:
        f.write(plan.to_json() + "\n")
    click.echo(f"wrote {len(recordings)} recordings, {len(dataset)} samples to {out}")


@main.command()
@click.option("--data", type=click.Path(exists=True), required=True,
              help="Corpus directory from synth-data (dataset.npz + splits.json).")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON file of training-config overrides.")
@click.option("--folds", type=int, default=0, show_default=True,
              help="Per-subject cross-validation folds to evaluate before the final fit.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--binary", is_flag=True, help="Train the binary-only transfer variant.")
@click.option("--out", type=click.Path(), required=True, help="Checkpoint path (.npz).")
def train(data: str, config_path: str | None, folds: int, seed: int, binary: bool,
          out: str) -> None:
    """Train the reaction model on a synthetic corpus."""
    dataset = feat.Dataset.load(os.path.join(data, "dataset.npz"))
    with open(os.path.join(data, "splits.json")) as f:
        plan = feat.SplitPlan.from_json(f.read())
    overrides = {}
    if config_path:
        with open(config_path) as f:
            overrides = json.load(f)
    if binary:
        overrides["lam_ce"] = 0.0
    tc = mdl.TrainConfig(seed=seed, **overrides)
    subjects = sorted(plan.holdout)
    if folds:
        for target in subjects[:folds]:
            idx = feat.fold_indices(dataset, plan, target)
            _params, hist = mdl.train(tc, dataset.subset(idx["train"]),
                                      dataset.subset(idx["test"]),
                                      dataset.subset(idx["validation"]))
            best = hist["test"][hist["best_epoch"] - 1]
            click.echo(f"fold {target}: best epoch {hist['best_epoch']}, "
                       f"test ce3 {best['ce3']:.4f}, accuracy {best['accuracy']:.3f}")
    split = feat.final_split_indices(dataset, plan)
    params, hist = mdl.train(tc, dataset.subset(split["train"]),
                             dataset.subset(split["test"]))
    mdl.save_checkpoint(out, params, tc.model_config(), tc)
    best = hist["test"][hist["best_epoch"] - 1]
    click.echo(f"saved {out} (best epoch {hist['best_epoch']}, "
               f"test ce3 {best['ce3']:.4f}, accuracy {best['accuracy']:.3f})")


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--data", type=click.Path(exists=True), required=True,
              help="One recording directory, or a corpus directory of them.")
@click.option("--report", type=click.Path(), required=True, help="Report directory.")
def rank(model_path: str, data: str, report: str) -> None:
    """Infer reward rankings for recorded sessions."""
    params, config, _tc = mdl.load_checkpoint(model_path)
    if os.path.exists(os.path.join(data, "meta.json")):
        dirs = [data]
    else:
        dirs = sorted(os.path.join(data, d) for d in os.listdir(data)
                      if os.path.exists(os.path.join(data, d, "meta.json")))
    if not dirs:
        raise click.ClickException(f"no session recordings under {data}")
    os.makedirs(report, exist_ok=True)
    results = {}
    for d in dirs:
        rec = obs.SessionRecording.load(d)
        result = inf.rank_episode(params, config, rec)
        results[os.path.basename(d)] = json.loads(result.to_json())
        click.echo(f"{os.path.basename(d)}: tau {result.tau}, "
                   f"map {result.ranking}, events {result.n_events}")
    with open(os.path.join(report, "ranking.json"), "w") as f:
        json.dump(results, f, sort_keys=True, indent=1)


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--profile", type=click.Choice(sorted(obs.PROFILES)), default="clean",
              show_default=True)
@click.option("--live", is_flag=True, help="Serve a live session instead of headless runs.")
@click.option("--seeds", type=int, default=10, show_default=True,
              help="Number of headless online sessions.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--episode-len", type=int, default=gw.EPISODE_LEN, show_default=True)
@click.option("--bind", default="127.0.0.1:8765", show_default=True)
@click.option("--report", type=click.Path(), default="reports", show_default=True)
def online(model_path: str, profile: str, live: bool, seeds: int, seed: int,
           episode_len: int, bind: str, report: str) -> None:
    """Run online-learning sessions (headless batch, or live via --live)."""
    params, config, _tc = mdl.load_checkpoint(model_path)
    if live:
        host, port = bind.rsplit(":", 1)
        srv.serve(params, config,
                  ses.SessionConfig(seed=seed, profile=None, checkpoint=model_path,
                                    episode_len=episode_len),
                  host=host, port=int(port))
        return
    result = ses.experiment_online_batch(params, config, n_seeds=seeds, seed=seed,
                                         profile_name=profile, episode_len=episode_len)
    paths = ses.write_report(result, report, "online")
    click.echo(f"{result['fraction_positive']:.0%} positive return "
               f"(binomial p {result['binomial_p_positive']:.4g}), "
               f"mean return {result['mean_return']:.1f} "
               f"vs baseline {result['baseline']['mean_return']:.1f}")
    for p in paths:
        click.echo(f"wrote {p}")


@main.command("eval-robotic")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True,
              help="Binary-variant checkpoint.")
@click.option("--subjects", type=int, default=8, show_default=True)
@click.option("--profile", type=click.Choice(sorted(obs.PROFILES)), default="clean",
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--report", type=click.Path(), default="reports", show_default=True)
def eval_robotic(model_path: str, subjects: int, profile: str, seed: int,
                 report: str) -> None:
    """Rank scripted robotic trajectories by reaction positivity."""
    params, config, _tc = mdl.load_checkpoint(model_path)
    result = ses.experiment_robotic_transfer(params, config, n_subjects=subjects,
                                             seed=seed, profile_name=profile)
    paths = ses.write_report(result, report, "robotic")
    for row in result["table"]:
        click.echo(f"{row['trajectory']:>22}  positivity {row['mean_positivity']:.3f}  "
                   f"return {row['return']:+}")
    click.echo(f"tau-b vs returns: {result['tau_b']}")
    for p in paths:
        click.echo(f"wrote {p}")


@main.command()
@click.option("--bind", default="127.0.0.1:8765", show_default=True)
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--profile", type=click.Choice(sorted(obs.PROFILES) + ["live"]),
              default="live", show_default=True,
              help="Reaction source; 'live' takes gestures from the client.")
@click.option("--step-period", type=float, default=obs.DEFAULT_STEP_PERIOD_S,
              show_default=True)
def serve(bind: str, model_path: str, seed: int, profile: str, step_period: float) -> None:
    """Serve a live session over a WebSocket for the dashboard."""
    params, config, _tc = mdl.load_checkpoint(model_path)
    host, port = bind.rsplit(":", 1)
    session_config = ses.SessionConfig(seed=seed, checkpoint=model_path,
                                       profile=None if profile == "live" else profile,
                                       step_period_s=step_period)
    srv.serve(params, config, session_config, host=host, port=int(port))


if __name__ == "__main__":
    main()
