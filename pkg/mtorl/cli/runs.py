"""
Command implementations behind the CLI.

Every run loads the configuration, applies ``--set`` overrides and the seed,
validates, echoes the effective config to the output directory and records
``run_meta.json``. Errors surface as MtorlError subclasses; the CLI turns
them into an exit code.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple


from mtorl.allocation import (
    ChannelPolicy,
    UserRanking,
    aggregate_user_score,
    channel_stats_from_journeys,
    explicit_policy,
    implicit_policy,
    merge_policies,
    rank_users,
    user_scores_from_journeys,
)
from mtorl.allocation.predictions import RewardPredictions, load_predictions, save_predictions
from mtorl.config.settings import (
    apply_overrides,
    dump_config,
    environment_config_from,
    hash_config,
    load_user_config,
    loss_weights_from,
    model_config_from,
    procedure_config_from,
    reward_spec_from,
    search_space_notes,
    training_config_from,
    validate_config,
    validate_paths,
)
from mtorl.data import Journey, load_journeys, prepare_dataset, write_journeys
from mtorl.data.sequences import SequenceBatch
from mtorl.model.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from mtorl.model.network import reward_score
from mtorl.model.params import count_parameters
from mtorl.report import export_history_csv, export_json, export_markdown, export_trace_csv
from mtorl.report.status import StatusReporter, get_reporter
from mtorl.simulator import (
    EnvironmentConfig,
    GreedyCtrAgent,
    NetworkAgent,
    RunReport,
    SyntheticEnvironment,
    UniformAgent,
    generate_corpus,
    run_procedure,
)
from mtorl.training import EvalReport, FitResult, collect_reward_predictions, evaluate, fit, predict
from mtorl.utils.errors import ConfigError
from mtorl.utils.fs import ensure_output_dir, read_json, write_json
from mtorl.utils.state import RunMetadata

logger = logging.getLogger(__name__)

POLICIES = ("model", "random", "greedy")
SPLITS = ("train", "validation", "test")


@dataclass
class RunContext:
    command: str
    config: dict
    out_dir: Path
    meta: RunMetadata
    reporter: StatusReporter
    outputs: List[Path] = field(default_factory=list)

    def output(self, name: str) -> Path:
        path = self.out_dir / name
        self.outputs.append(path)
        return path

    def finish(self) -> None:
        self.meta.record_outputs(self.outputs)
        self.meta.finish()


def prepare_run(
    command: str,
    config_path: Optional[Path],
    overrides: Sequence[str],
    seed: Optional[int],
    out: Path,
    reporter: Optional[StatusReporter] = None,
) -> RunContext:
    config = load_user_config(config_path)
    apply_overrides(config, overrides)
    if seed is not None:
        config["seed"] = seed
    validate_config(config)
    for note in search_space_notes(config):
        logger.debug("search space: %s", note)

    out_dir = ensure_output_dir(out)
    ctx = RunContext(
        command=command,
        config=config,
        out_dir=out_dir,
        meta=RunMetadata(out_dir, command),
        reporter=reporter or get_reporter(),
    )
    ctx.meta.update_config(hash_config(config), config["seed"])
    dump_config(config, ctx.output("config.yaml"))
    return ctx


def load_logged_journeys(config: dict) -> List[Journey]:
    data = config["data"]
    keys = ["data.journeys"] + (["data.profiles"] if data["profiles"] else [])
    validate_paths(config, keys)
    journeys, _ = load_journeys(
        Path(data["journeys"]),
        Path(data["profiles"]) if data["profiles"] else None,
        channels=data["channels"],
        tolerance=data["malformed_tolerance"],
    )
    return journeys


def _split_ratios(config: dict) -> Tuple[float, float, float]:
    a, b, c = config["data"]["split"]
    return float(a), float(b), float(c)


# gen-data -----------------------------------------------------------------


def run_gen_data(ctx: RunContext) -> List[Journey]:
    config = ctx.config
    env_section = config["environment"]
    with ctx.reporter.section("Generating synthetic corpus"):
        env_config = environment_config_from(config)
        env = SyntheticEnvironment(env_config)
        journeys = generate_corpus(
            env,
            (env_section["journey_min"], env_section["journey_max"]),
            behavior_noise=float(env_section["behavior_noise"]),
            seed=config["seed"],
        )
        write_journeys(journeys, ctx.output("journeys.jsonl"), ctx.output("profiles.jsonl"))
        write_json(ctx.output("environment.json"), env_config.to_dict())
        ctx.reporter.success(
            f"{len(journeys)} journeys, {sum(len(j) for j in journeys)} exposures over {env_config.channels} channels"
        )
    ctx.meta.update_metadata(users=len(journeys))
    ctx.finish()
    return journeys


# train --------------------------------------------------------------------


@dataclass
class TrainOutcome:
    fit: FitResult
    test_report: EvalReport
    checkpoint_path: Path


def run_train(ctx: RunContext, on_epoch: Optional[Callable[[dict], None]] = None) -> TrainOutcome:
    config = ctx.config
    reporter = ctx.reporter

    with reporter.section("Loading journeys"):
        journeys = load_logged_journeys(config)
        prepared = prepare_dataset(
            journeys,
            channels=config["data"]["channels"],
            n=config["model"]["n"],
            spec=reward_spec_from(config),
            seed=config["seed"],
            min_length=config["data"]["min_length"],
            stride=config["data"]["stride"],
            ratios=_split_ratios(config),
        )
        train, validation, test = prepared.samples.sizes()
        reporter.success(f"{len(journeys)} journeys → {train}/{validation}/{test} train/validation/test samples")
        if prepared.stats.discarded_short or prepared.stats.rejected:
            reporter.warning(
                f"{prepared.stats.discarded_short} short and {prepared.stats.rejected} invalid journeys left out"
            )

    model_config = model_config_from(config, prepared.dims.fused_size, prepared.reward_spec)
    reward_kind = prepared.reward_spec.loss_kind
    training_config = training_config_from(config)

    with reporter.progress("Training", total=training_config.epochs) as advance:
        def step(row: dict) -> None:
            advance(f"loss {row['total']:.4f}  val F1 {row['val_f1']:.3f}")
            if on_epoch is not None:
                on_epoch(row)

        result = fit(
            prepared.samples.train,
            prepared.samples.validation,
            model_config,
            training_config,
            loss_weights_from(config),
            reward_kind,
            on_epoch=step,
        )

    checkpoint_path = save_checkpoint(
        ctx.output("checkpoint.safetensors"), result.params, model_config, prepared.reward_spec, prepared.dims
    )
    export_history_csv(result.history, ctx.output("history.csv"))
    test_report = evaluate(result.params, model_config, prepared.samples.test, reward_kind, training_config.average)
    export_json(test_report, ctx.output("eval_report.json"))

    outcome = TrainOutcome(fit=result, test_report=test_report, checkpoint_path=checkpoint_path)
    reporter.success(f"Checkpoint written to {checkpoint_path}")
    ctx.meta.update_metadata(
        epochs_run=len(result.history),
        best_epoch=result.best_epoch,
        stopped_early=result.stopped_early,
        dataset=prepared.stats.to_dict(),
    )
    ctx.finish()
    return outcome


def training_summary(outcome: TrainOutcome) -> Dict[str, object]:
    result = outcome.fit
    return {
        "epochs_run": len(result.history),
        "best_epoch": result.best_epoch,
        "best_val_f1": result.best_val_f1,
        "stopped_early": result.stopped_early,
        "final_train_policy_loss": result.final_train.get("policy_loss", float("nan")),
        "test_f1": outcome.test_report.f1,
        "parameters": count_parameters(result.params),
    }


# evaluate -----------------------------------------------------------------


def run_evaluate(ctx: RunContext, checkpoint_path: Path, split: str = "test") -> EvalReport:
    if split not in SPLITS:
        raise ConfigError(f"--split must be one of {', '.join(SPLITS)} (got {split!r})")
    config = ctx.config
    checkpoint = load_checkpoint(checkpoint_path)
    with ctx.reporter.section(f"Scoring {split} split"):
        journeys = load_logged_journeys(config)
        prepared = prepare_dataset(
            journeys,
            channels=checkpoint.config.m,
            n=checkpoint.config.n,
            spec=checkpoint.reward_spec,
            seed=config["seed"],
            min_length=config["data"]["min_length"],
            stride=config["data"]["stride"],
            ratios=_split_ratios(config),
            dims=checkpoint.dims,
        )
        samples = prepared.samples.get(split)
        report = evaluate(
            checkpoint.params, checkpoint.config, samples,
            checkpoint.reward_spec.loss_kind, config["training"]["average"],
        )
        export_json(report, ctx.output("eval_report.json"))
        if samples:
            predictions = predict_rewards(checkpoint, SequenceBatch.stack(samples), config["allocation"]["score"])
            save_predictions(predictions, ctx.output("predictions.json"))
            ctx.reporter.success(f"Reward predictions for {len(predictions.user_scores)} users written")
    ctx.finish()
    return report


def predict_rewards(checkpoint: Checkpoint, batch: SequenceBatch, score: str = "last") -> RewardPredictions:
    """Per-channel reward predictions and per-user scores (latest window per user)."""
    by_channel = collect_reward_predictions(checkpoint.params, checkpoint.config, batch)
    _, preds = predict(checkpoint.params, checkpoint.config, batch)
    scores = reward_score(preds, checkpoint.config.reward_head)
    users: Dict[str, float] = {}
    for i, user in enumerate(batch.user_ids):
        users[user] = aggregate_user_score(scores[i], batch.mask[i], score)
    return RewardPredictions(by_channel=by_channel, user_scores=users)


# allocation ---------------------------------------------------------------


@dataclass
class AllocationResult:
    explicit: ChannelPolicy
    implicit: Optional[ChannelPolicy]
    merged: ChannelPolicy
    ranking: UserRanking
    tau: float
    alpha: float

    def to_dict(self) -> dict:
        return {
            "explicit": self.explicit.to_list(),
            "implicit": self.implicit.to_list() if self.implicit is not None else None,
            "merged": self.merged.to_list(),
            "tau": self.tau,
            "alpha": self.alpha,
            "ranking": self.ranking.to_list(),
        }


def build_policies(
    journeys: Sequence[Journey],
    m: int,
    predictions: Optional[RewardPredictions],
    tau: float,
    alpha: float,
) -> Tuple[ChannelPolicy, Optional[ChannelPolicy], ChannelPolicy]:
    """
    Explicit, implicit and merged channel policies.

    Raises:
        ConfigError: ``alpha > 0`` without reward predictions.
    """
    explicit = explicit_policy(channel_stats_from_journeys(journeys, m))
    if predictions is None:
        if alpha > 0:
            raise ConfigError(
                f"allocation.alpha={alpha} needs reward predictions for the implicit policy; "
                "pass --predictions (see `mtorl evaluate`) or set --alpha 0"
            )
        return explicit, None, explicit
    implicit = implicit_policy(predictions.by_channel, tau, m)
    return explicit, implicit, merge_policies(explicit, implicit, alpha)


def run_allocate(ctx: RunContext, predictions_path: Optional[Path] = None) -> AllocationResult:
    config = ctx.config
    section = config["allocation"]
    predictions_path = predictions_path or (
        Path(config["data"]["predictions"]) if config["data"]["predictions"] else None
    )
    with ctx.reporter.section("Computing channel policies"):
        journeys = load_logged_journeys(config)
        predictions = load_predictions(predictions_path) if predictions_path is not None else None
        explicit, implicit, merged = build_policies(
            journeys, config["data"]["channels"], predictions, section["tau"], section["alpha"]
        )
        scores = predictions.user_scores if predictions is not None and predictions.user_scores else user_scores_from_journeys(journeys)
        ranking = rank_users(scores, section["top_n"])
        result = AllocationResult(explicit, implicit, merged, ranking, section["tau"], section["alpha"])
        export_json(result, ctx.output("allocation.json"))
        ctx.reporter.success(f"Ranked {len(ranking)} of {len(scores)} users")
    ctx.finish()
    return result


# simulate -----------------------------------------------------------------


def load_environment(config: dict) -> EnvironmentConfig:
    """The ground truth saved by gen-data, or a fresh one from the config."""
    path = config["data"]["environment"]
    if path and Path(path).exists():
        return EnvironmentConfig.from_dict(read_json(Path(path)))
    logger.warning("no environment file at %s; building one from the environment section", path)
    return environment_config_from(config)


def _initial_policy(config: dict, m: int) -> Tuple[ChannelPolicy, Optional[List[Journey]]]:
    journeys_path = config["data"]["journeys"]
    if not journeys_path or not Path(journeys_path).exists():
        logger.warning("no journey log; exploring with a uniform initial policy")
        return ChannelPolicy.uniform(m), None
    journeys = load_logged_journeys(config)
    section = config["allocation"]
    predictions = load_predictions(Path(config["data"]["predictions"])) if config["data"]["predictions"] else None
    alpha = section["alpha"] if predictions is not None else 0.0
    _, _, merged = build_policies(journeys, m, predictions, section["tau"], alpha)
    return merged, journeys


def run_simulate(
    ctx: RunContext,
    checkpoint_path: Optional[Path] = None,
    policy: str = "model",
    budget: Optional[float] = None,
) -> RunReport:
    if policy not in POLICIES:
        raise ConfigError(f"--policy must be one of {', '.join(POLICIES)} (got {policy!r})")
    config = ctx.config
    if budget is not None:
        config["procedure"]["budget"] = budget
        validate_config(config)

    env_config = load_environment(config)
    if env_config.channels != config["data"]["channels"]:
        raise ConfigError(
            f"environment has {env_config.channels} channels but data.channels is {config['data']['channels']}"
        )
    initial, journeys = _initial_policy(config, env_config.channels)

    memory_length = config["model"]["n"]
    penalty = config["reward"]["penalty_strength"]
    if policy == "model":
        if checkpoint_path is None:
            raise ConfigError("--policy model needs --checkpoint")
        stored = load_checkpoint(checkpoint_path)
        expected = model_config_from(config, stored.dims.fused_size, stored.reward_spec)
        checkpoint = load_checkpoint(checkpoint_path, expected_config=expected)
        if (checkpoint.dims.touch_dim, checkpoint.dims.profile_dim) != (env_config.touch_dim, env_config.profile_dim):
            raise ConfigError(
                f"checkpoint expects |q|={checkpoint.dims.touch_dim}, |f|={checkpoint.dims.profile_dim}; "
                f"environment gives {env_config.touch_dim}, {env_config.profile_dim}"
            )
        agent = NetworkAgent.from_checkpoint(checkpoint, config["procedure"]["score_aggregation"])
        memory_length = checkpoint.config.n
        penalty = checkpoint.reward_spec.penalty_strength
    elif policy == "random":
        agent = UniformAgent(env_config.channels)
    else:
        if journeys is None:
            raise ConfigError("--policy greedy needs a journey log to estimate channel CTRs")
        agent = GreedyCtrAgent.from_stats(channel_stats_from_journeys(journeys, env_config.channels))

    procedure = procedure_config_from(config, memory_length, penalty)
    with ctx.reporter.section(f"Simulating with the {policy} policy", show_spinner=True):
        report = run_procedure(agent, SyntheticEnvironment(env_config), procedure, initial)
        export_json(report, ctx.output("run_report.json"))
        export_trace_csv(report, ctx.output("trace.csv"))
        export_markdown(
            "Simulation summary",
            {k: v for k, v in report.to_dict().items() if k != "trace"},
            ctx.output("summary.md"),
        )
    ctx.meta.update_metadata(policy=policy, initial_policy=initial.to_list())
    ctx.finish()
    return report
