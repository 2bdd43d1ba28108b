"""
命令行入口

    motion-control data gen --spec spec.json --out data/
    motion-control train denoiser --data data/ --config cfg.json --out ckpt/
    motion-control train controlnet --data data/ --base ckpt/ --config cfg.json --out ckpt_cn/
    motion-control generate --ckpt ckpt_cn/ --prompt walk --targets cond.json --seed 0 --out out/motion.json
    motion-control interact --plan handshake_plan.json --ckpt ckpt_cn/ --seed 0 --out out/
    motion-control plan fetch --instruction "..." --out plans.json [--fixture fencing_plans.txt]
    motion-control plan validate --plan plans.json
    motion-control eval --generated out/ --threshold 0.2 --report report.json
    motion-control export --motion out/agent0.json --format bvh --out agent0.bvh
    motion-control ablation --ckpt ckpt_cn/ --out ablation/
    motion-control benchmark --out bench/

每次运行都在输出目录写出 manifest.json。
"""

import argparse
import asyncio
import json
import sys
from pathlib import Path
from typing import Any, Callable, Optional, Sequence, Type, TypeVar

import torch
from pydantic import BaseModel, ValidationError

from . import config
from .core import MotionGenerator, train_base_model, train_control_branch
from .errors import ConfigError, MotionControlError, PlanValidationError, Severity, exit_code_for
from .evaluation import (
    ABLATION_VARIANTS,
    benchmark_optimizers,
    condition_path,
    control_cases,
    evaluate_motions,
    guided_vs_unguided,
    run_ablation,
    to_markdown,
)
from .guidance.problem import SpatialCondition
from .interaction.plan import check_plans, emit_plan_json, parse_plans
from .models import GuidanceMode, MetricSettings, RunConfig, RunManifest, load_run_config
from .motion.export import EXPORT_FORMATS, export_motions
from .motion.io import load_motion, save_motion
from .motion.skeleton import default_skeleton
from .networks.checkpoint import load_checkpoint
from .planner.client import PlannerSettings, plan_interaction, plans_from_raw, resolve_fixture
from .planner.template import PlannerBackground, template_hash
from .synth.dataset import Corpus, CorpusSpec, generate_corpus
from .utils import config_hash, get_logger, get_version_from_pyproject, resolve_device

logger = get_logger("cli")

ModelT = TypeVar("ModelT", bound=BaseModel)


class RunContext:
    """一次运行的清单记录"""

    def __init__(self, command: str, args: argparse.Namespace):
        arguments = {k: v for k, v in vars(args).items() if k != "handler"}
        self.manifest = RunManifest(
            command=command,
            arguments=json.loads(json.dumps(arguments, default=str)),
            seed=getattr(args, "seed", None),
            package_version=get_version_from_pyproject(),
            torch_version=torch.__version__,
        )

    def use_config(self, run_config: RunConfig) -> None:
        self.manifest.config_hash = run_config.hash()

    def output(self, *paths: Path | str) -> None:
        self.manifest.outputs.extend(str(p) for p in paths)

    def finish(self, directory: Path) -> Path:
        path = self.manifest.write(directory)
        logger.info(f"运行清单已写出: {path}")
        return path


def _out_dir(path: str | Path) -> Path:
    """文件输出取其所在目录，目录输出取自身"""
    path = Path(path)
    return path.parent if path.suffix else path


def _read_json(path: str | Path, what: str) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"{what}不存在: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"{what}不是合法JSON: {e}")


def _validated(model: Type[ModelT], data: Any, what: str) -> ModelT:
    """校验失败时报告第一个字段的 JSON 路径"""
    try:
        return model.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        json_path = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"{what}字段 {json_path} 不合法: {first['msg']}", path=json_path)


def _run_config(args: argparse.Namespace, ctx: RunContext) -> RunConfig:
    run_config = load_run_config(getattr(args, "config", None))
    mode = getattr(args, "mode", None)
    if mode:
        guidance = run_config.guidance.model_copy(update={"mode": GuidanceMode(mode)})
        run_config = run_config.model_copy(update={"guidance": guidance})
    ctx.use_config(run_config)
    return run_config


# ============================
# 子命令
# ============================

def cmd_data_gen(args: argparse.Namespace, ctx: RunContext) -> Path:
    data = _read_json(args.spec, "语料规格") if args.spec else {}
    spec = _validated(CorpusSpec, data, "语料规格")
    ctx.manifest.seed = spec.seed
    ctx.manifest.config_hash = config_hash(spec.model_dump())
    corpus = generate_corpus(spec)
    out = corpus.save(args.out)
    ctx.output(out)
    return out


def cmd_train(args: argparse.Namespace, ctx: RunContext) -> Path:
    run_config = _run_config(args, ctx)
    ctx.manifest.seed = run_config.train.seed
    device = resolve_device(args.device)
    corpus = Corpus.load(args.data)
    if args.target == "denoiser":
        result = train_base_model(corpus, run_config, args.out, device)
    else:
        if not args.base:
            raise ConfigError("训练 controlnet 需要 --base 指定去噪器检查点", path="base")
        base = load_checkpoint(args.base)
        ctx.manifest.checkpoint_hashes = {f"base_{k}": v for k, v in base.hashes().items()}
        result = train_control_branch(corpus, base, run_config, args.out, device=device)
    ctx.manifest.guidance_summary = {"final_loss": result.final_loss, "steps": result.steps}
    ctx.output(args.out)
    return Path(args.out)


def _generator(args: argparse.Namespace, ctx: RunContext) -> MotionGenerator:
    run_config = _run_config(args, ctx)
    generator = MotionGenerator.from_directory(args.ckpt, run_config, resolve_device(args.device),
                                               progress=args.progress)
    ctx.manifest.checkpoint_hashes = generator.checkpoint.hashes()
    return generator


def cmd_generate(args: argparse.Namespace, ctx: RunContext) -> Path:
    generator = _generator(args, ctx)
    skeleton = generator.skeleton
    condition = None
    n_frames = args.frames
    if args.targets:
        condition = SpatialCondition.load(args.targets, skeleton, n_frames)
        n_frames = condition.num_frames
    if n_frames is None:
        raise ConfigError("未给出 --targets 时需要 --frames", path="frames")

    result = generator.generate(args.prompt, n_frames, args.seed, condition, args.fps)
    out = save_motion(args.out, result.motion)
    ctx.output(out)
    if condition is not None:
        ctx.output(condition.save(condition_path(out)))
    if result.trace.rows:
        ctx.output(result.trace.to_csv(out.with_name(out.stem + ".guidance.csv")))
    ctx.manifest.guidance_summary = result.trace.summary()
    return out


def cmd_interact(args: argparse.Namespace, ctx: RunContext) -> Path:
    generator = _generator(args, ctx)
    plan_text = resolve_fixture(args.plan).read_text(encoding="utf-8")
    plans = parse_plans(plan_text, generator.skeleton.num_joints, args.strict)
    if not 0 <= args.plan_index < len(plans):
        raise ConfigError(f"计划索引 {args.plan_index} 超出范围（共 {len(plans)} 个）", path="plan_index")
    plan = plans[args.plan_index]
    result = generator.interact(plan, args.seed, separation=args.separation)
    out = Path(args.out)
    ctx.output(*result.save(out))

    report = generator.check_interaction(result, args.threshold)
    report_path = out / "interaction_report.json"
    report_path.write_text(json.dumps(report.to_dict(), indent=2, ensure_ascii=False), encoding="utf-8")
    ctx.output(report_path)
    ctx.manifest.guidance_summary = result.trace.summary()
    print(json.dumps(report.to_dict(), indent=2, ensure_ascii=False))
    return out


def _background(args: argparse.Namespace) -> PlannerBackground:
    data = dict(config.PLANNER_BACKGROUND)
    if args.background:
        data.update(_read_json(args.background, "背景参数"))
    return _validated(PlannerBackground, data, "背景参数")


def cmd_plan_fetch(args: argparse.Namespace, ctx: RunContext) -> Path:
    background = _background(args)
    settings = PlannerSettings.from_env(base_url=args.endpoint, model=args.model)
    plans, diagnostics, raw = asyncio.run(plan_interaction(
        args.instruction, background, fixture_path=args.fixture, settings=settings,
        use_cache=not args.no_cache, strict=args.strict))
    for d in diagnostics:
        logger.warning(str(d))

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(emit_plan_json(plans), encoding="utf-8")
    raw_path = out.with_suffix(".raw.txt")
    raw_path.write_text(raw, encoding="utf-8")
    ctx.output(out, raw_path)
    ctx.manifest.guidance_summary = {
        "template_hash": template_hash(),
        "plans": len(plans),
        "diagnostics": len(diagnostics),
        "fixture": args.fixture,
    }
    if not plans:
        raise PlanValidationError("规划器输出中没有可用计划", diagnostics)
    return out


def cmd_plan_validate(args: argparse.Namespace, ctx: RunContext) -> Path:
    skeleton = default_skeleton()
    plan_path = resolve_fixture(args.plan)
    text = plan_path.read_text(encoding="utf-8")
    if plan_path.suffix == ".json":
        plans, diagnostics = check_plans(text, skeleton.num_joints, args.strict)
    else:
        plans, diagnostics = plans_from_raw(text, skeleton, strict=args.strict)
    errors = [d for d in diagnostics if d.severity == Severity.ERROR]
    summary = {
        "plans": len(plans),
        "errors": len(errors),
        "warnings": len(diagnostics) - len(errors),
        "diagnostics": [d.model_dump(mode="json") for d in diagnostics],
    }
    print(json.dumps(summary, indent=2, ensure_ascii=False))
    ctx.manifest.guidance_summary = {k: summary[k] for k in ("plans", "errors", "warnings")}
    if errors:
        raise PlanValidationError(f"计划校验失败：{len(errors)} 个错误", diagnostics)
    return Path(args.out)


def cmd_eval(args: argparse.Namespace, ctx: RunContext) -> Path:
    settings = MetricSettings(threshold=args.threshold)
    report = evaluate_motions(args.generated, settings)
    text = report.model_dump_json(indent=2)
    report_path = Path(args.report) if args.report else Path(args.generated) / "report.json"
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(text, encoding="utf-8")
    ctx.output(report_path)
    print(text)
    return report_path


def cmd_export(args: argparse.Namespace, ctx: RunContext) -> Path:
    motions = [load_motion(p) for p in args.motion]
    written = export_motions(motions, args.out, args.format)
    ctx.output(*written)
    return Path(args.out)


def cmd_ablation(args: argparse.Namespace, ctx: RunContext) -> Path:
    run_config = _run_config(args, ctx)
    checkpoint = load_checkpoint(args.ckpt)
    ctx.manifest.checkpoint_hashes = checkpoint.hashes()
    cases = control_cases(args.cases, args.frames, args.seed, joint=args.joint, keyframe_ratio=args.keyframe_ratio)
    seeds = [args.seed + i for i in range(args.seeds)]
    table = run_ablation(checkpoint, cases, seeds, run_config.guidance, run_config.diffusion,
                         MetricSettings(threshold=args.threshold), variants=args.variants)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "ablation.csv", index=False)
    (out / "ablation.md").write_text(to_markdown(table) + "\n", encoding="utf-8")
    ctx.output(out / "ablation.csv", out / "ablation.md")
    if "controlnet+guidance" in set(table["variant"]) and "neither" in set(table["variant"]):
        ctx.manifest.guidance_summary = {"guided_beats_unguided": guided_vs_unguided(table)}
    print(to_markdown(table))
    return out


def cmd_benchmark(args: argparse.Namespace, ctx: RunContext) -> Path:
    table = benchmark_optimizers(args.problems, args.seed, args.frames, args.iterations)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "benchmark.csv", index=False)
    ctx.output(out / "benchmark.csv")
    ctx.manifest.guidance_summary = {
        "lbfgs_evals_mean": float(table["lbfgs_evals"].mean()),
        "gd_evals_mean": float(table["gd_evals"].mean()),
        "ratio_median": float(table["ratio"].median()),
    }
    print(to_markdown(table))
    return out


# ============================
# 参数解析
# ============================

def _add_sampling_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--ckpt", required=True, help="检查点目录")
    parser.add_argument("--config", help="运行配置 JSON")
    parser.add_argument("--mode", choices=[m.value for m in GuidanceMode], help="IK 引导作用变量")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--device", help="计算设备，缺省读取 MOTION_CONTROL_DEVICE")
    parser.add_argument("--progress", action="store_true", help="显示采样进度条")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="motion-control", description="约束引导的人体运动扩散")
    commands = parser.add_subparsers(dest="command", required=True)

    data = commands.add_parser("data", help="合成训练语料").add_subparsers(dest="action", required=True)
    gen = data.add_parser("gen", help="生成程序化动作语料")
    gen.add_argument("--spec", help="语料规格 JSON")
    gen.add_argument("--out", required=True)
    gen.set_defaults(handler=cmd_data_gen)

    train = commands.add_parser("train", help="训练去噪器或 ControlNet")
    train.add_argument("target", choices=["denoiser", "controlnet"])
    train.add_argument("--data", required=True, help="语料目录")
    train.add_argument("--config", help="运行配置 JSON")
    train.add_argument("--base", help="controlnet 训练所用的去噪器检查点")
    train.add_argument("--out", required=True)
    train.add_argument("--device")
    train.set_defaults(handler=cmd_train)

    generate = commands.add_parser("generate", help="单人受控生成")
    _add_sampling_args(generate)
    generate.add_argument("--prompt", default="walk")
    generate.add_argument("--targets", help="空间条件 JSON")
    generate.add_argument("--frames", type=int, help="帧数（无条件时必需）")
    generate.add_argument("--fps", type=int, default=config.DEFAULT_FPS)
    generate.add_argument("--out", required=True)
    generate.set_defaults(handler=cmd_generate)

    interact = commands.add_parser("interact", help="按接触计划生成多人交互")
    _add_sampling_args(interact)
    interact.add_argument("--plan", required=True)
    interact.add_argument("--plan-index", type=int, default=0)
    interact.add_argument("--separation", type=float, default=config.INITIAL_SEPARATION)
    interact.add_argument("--threshold", type=float, default=config.INTERACTION_THRESHOLD)
    interact.add_argument("--strict", action="store_true")
    interact.add_argument("--out", required=True)
    interact.set_defaults(handler=cmd_interact)

    plan = commands.add_parser("plan", help="接触计划工具").add_subparsers(dest="action", required=True)
    fetch = plan.add_parser("fetch", help="调用规划器端点或读取夹具")
    fetch.add_argument("--instruction", required=True)
    fetch.add_argument("--out", required=True)
    fetch.add_argument("--fixture", help="离线夹具文件")
    fetch.add_argument("--endpoint", help="覆盖 PLANNER_BASE_URL")
    fetch.add_argument("--model", help="覆盖 PLANNER_MODEL")
    fetch.add_argument("--background", help="背景参数 JSON")
    fetch.add_argument("--no-cache", action="store_true")
    fetch.add_argument("--strict", action="store_true")
    fetch.set_defaults(handler=cmd_plan_fetch)
    validate = plan.add_parser("validate", help="校验计划文件（JSON 或计划文本）")
    validate.add_argument("--plan", required=True)
    validate.add_argument("--strict", action="store_true")
    validate.add_argument("--out", default=".", help="运行清单输出目录")
    validate.set_defaults(handler=cmd_plan_validate)

    evaluate = commands.add_parser("eval", help="评估生成目录")
    evaluate.add_argument("--generated", required=True)
    evaluate.add_argument("--threshold", type=float, default=config.SINGLE_AGENT_THRESHOLD)
    evaluate.add_argument("--report")
    evaluate.set_defaults(handler=cmd_eval)

    export = commands.add_parser("export", help="导出运动")
    export.add_argument("--motion", required=True, nargs="+")
    export.add_argument("--format", required=True, choices=EXPORT_FORMATS)
    export.add_argument("--out", required=True)
    export.set_defaults(handler=cmd_export)

    ablation = commands.add_parser("ablation", help="ControlNet 与 IK 引导消融")
    _add_sampling_args(ablation)
    ablation.add_argument("--cases", type=int, default=8)
    ablation.add_argument("--seeds", type=int, default=2)
    ablation.add_argument("--frames", type=int, default=60)
    ablation.add_argument("--joint", default="pelvis")
    ablation.add_argument("--keyframe-ratio", type=float, default=1.0)
    ablation.add_argument("--threshold", type=float, default=config.SINGLE_AGENT_THRESHOLD)
    ablation.add_argument("--variants", nargs="+", choices=list(ABLATION_VARIANTS))
    ablation.add_argument("--out", required=True)
    ablation.set_defaults(handler=cmd_ablation)

    bench = commands.add_parser("benchmark", help="L-BFGS 与梯度下降求值次数对比")
    bench.add_argument("--problems", type=int, default=20)
    bench.add_argument("--frames", type=int, default=16)
    bench.add_argument("--iterations", type=int, default=10)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", required=True)
    bench.set_defaults(handler=cmd_benchmark)
    return parser


def _command_name(args: argparse.Namespace) -> str:
    return " ".join(str(p) for p in (args.command, getattr(args, "action", None), getattr(args, "target", None)) if p)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """CLI 主入口，返回退出码"""
    parser = build_parser()
    args = parser.parse_args(argv)
    handler: Callable[[argparse.Namespace, RunContext], Path] = args.handler
    ctx = RunContext(_command_name(args), args)
    logger.info(f"开始运行: {ctx.manifest.command}，参数: {ctx.manifest.arguments}")
    try:
        out = handler(args, ctx)
    except (MotionControlError, FileNotFoundError) as e:
        code = exit_code_for(e)
        logger.error(f"运行中止（退出码 {code}）: {e}")
        print(f"错误: {e}", file=sys.stderr)
        return code
    except Exception as e:
        logger.exception(f"运行异常: {e}")
        print(f"错误: {e}", file=sys.stderr)
        return exit_code_for(e)
    ctx.finish(_out_dir(out))
    logger.info(f"运行完成: {ctx.manifest.command}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
