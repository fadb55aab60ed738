"""Command-line entry points.

Subcommands: annotate, audit, render, augment, mix, sim, serve.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .annotate import (
    ClientConfig,
    HttpModelClient,
    ReplayMockClient,
    annotate_episodes,
    audit_accuracy,
    draw_audit_batch,
    read_audit_batch,
    write_audit_batch,
    write_label,
)
from .augment import CutMixParams, PatchPool, TranslateParams, augment_batch
from .core import (
    GroundedInstruction,
    GroundingFormat,
    NormBox,
    load_image,
    save_image,
)
from .ingest import (
    DatasetManifest,
    Grounding,
    Sample,
    make_provenance,
    read_manifest,
    scan_episode,
    write_manifest,
)
from .mixture import MixtureSpec, build_mixture, mixture_stats
from .render import default_style, render_box_text, render_mask, render_overlay
from .sim import EvalConfig, TrialProtocol, run_eval


def _norm_box(text: str) -> NormBox:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("box must be x1,y1,x2,y2 as fractions")
    return NormBox(*parts)


def _client(mock: str):
    if mock and mock != "off":
        return ReplayMockClient.load(mock)
    return HttpModelClient(ClientConfig.from_env())


def cmd_annotate(args) -> int:
    root = Path(args.root)
    episode_dirs = sorted(root.glob(args.episodes))
    if not episode_dirs:
        print(f"no episodes match {args.episodes} under {root}", file=sys.stderr)
        return 1
    episodes = [scan_episode(d) for d in episode_dirs]
    client = _client(args.mock)
    labels = annotate_episodes(episodes, client, frames=args.frames, max_workers=args.workers)
    for label in labels:
        path = write_label(label, root)
        print(f"{label.episode_id}.{label.segment_id}: box={label.box.as_tuple()} -> {path}")
    return 0


def cmd_audit(args) -> int:
    manifest = read_manifest(args.manifest)
    if args.score:
        batch = read_audit_batch(args.score)
        accuracy = audit_accuracy(batch)
        print(f"accuracy: {'N/A' if accuracy is None else f'{accuracy:.2f}'}")
        return 0
    batch = draw_audit_batch(manifest, n=args.n, seed=args.seed)
    out = Path(args.out)
    write_audit_batch(batch, out)
    print(f"wrote {len(batch.items)} audit items to {out}")
    if args.render_dir:
        render_dir = Path(args.render_dir)
        render_dir.mkdir(parents=True, exist_ok=True)
        root = Path(args.root) if args.root else None
        for i, item in enumerate(batch.items):
            if root is None:
                break
            episode = scan_episode(root / item.episode_id)
            frame = load_image(episode.cameras["high"][0])
            overlay = render_overlay(frame, item.box, default_style(frame.width, frame.height))
            save_image(overlay, render_dir / f"{i:03d}_{item.episode_id}.png")
        print(f"rendered overlays to {render_dir}")
    return 0


def cmd_render(args) -> int:
    image = load_image(args.image)
    fmt = GroundingFormat(args.format)
    if fmt is GroundingFormat.BOX_TEXT:
        print(render_box_text(args.text, args.box, image.width, image.height))
        return 0
    if fmt is GroundingFormat.BOX_OVERLAY:
        out = render_overlay(image, args.box, default_style(image.width, image.height))
    else:
        out = render_mask(image, args.box)
    save_image(out, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_augment(args) -> int:
    manifest = read_manifest(args.manifest)
    root = Path(args.root)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    lo, hi = (float(v) for v in args.cutmix.split(":"))
    translate = TranslateParams(max_shift_frac_x=args.max_shift, max_shift_frac_y=args.max_shift)
    cutmix = CutMixParams(
        apply_prob=args.apply_prob,
        area_frac_range=(lo, hi),
        patch_pool=PatchPool.load_dir(args.patch_pool) if args.apply_prob > 0 else None,
    )
    visual = [r for r in manifest.records if r.modality == "visual"]
    instructions = []
    keys = []
    for i, record in enumerate(visual):
        episode = scan_episode(root / record.episode_id)
        frame = load_image(episode.cameras["high"][0])
        style = default_style(frame.width, frame.height)
        grounded = GroundedInstruction(
            text=record.instruction.text,
            grounded_image=render_overlay(frame, record.grounding.box, style),
            box=record.grounding.box,
            format=record.grounding.format,
        )
        instructions.append(grounded)
        keys.append((record.episode_id, i))
    augmented = augment_batch(instructions, translate, cutmix, args.seed, keys=keys)
    records = []
    for record, aug, (episode_id, i) in zip(visual, augmented, keys):
        name = f"{episode_id}.{i:05d}.png"
        save_image(aug.grounded_image, out_dir / name)
        records.append(
            Sample(
                episode_id=record.episode_id,
                modality="visual",
                instruction=record.instruction,
                grounding=Grounding(box=aug.box, format=aug.format, marker={"image": name}),
            )
        )
    out_manifest = DatasetManifest(
        records=records,
        provenance=make_provenance(seed=args.seed, source_roots=[str(root)]),
    )
    write_manifest(out_manifest, out_dir / "augmented.jsonl")
    print(f"augmented {len(records)} samples into {out_dir}")
    return 0


def cmd_mix(args) -> int:
    ratio_text, ratio_visual = (int(v) for v in args.ratio.split(":"))
    spec = MixtureSpec(ratio_text=ratio_text, ratio_visual=ratio_visual, shuffle_seed=args.seed)
    mixed = build_mixture(read_manifest(args.text), read_manifest(args.visual), spec)
    write_manifest(mixed, args.out)
    stats = mixture_stats(mixed)
    print(f"wrote {stats['total']} records ({stats['text']} text / {stats['visual']} visual) to {args.out}")
    return 0


def cmd_sim(args) -> int:
    protocol = TrialProtocol(trials_per_scene=args.trials)
    config = EvalConfig(
        families=(args.family,),
        policies=(args.policy,) if args.policy != "both" else ("text", "grounded"),
        scenes_per_family=args.scenes,
        protocol=protocol,
        root_seed=args.seed,
    )
    report = run_eval(config)
    print(report.to_table())
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
        print(f"wrote report to {args.report}")
    if args.frames_dir:
        from .sim import gen_scene, grounded_instruction_for, render_overhead, scene_seed

        frames_dir = Path(args.frames_dir)
        frames_dir.mkdir(parents=True, exist_ok=True)
        for i in range(args.scenes):
            scene = gen_scene(args.family, {}, seed=scene_seed(args.seed, args.family, i))
            save_image(render_overhead(scene), frames_dir / f"{args.family}_{i:03d}_overhead.png")
            grounded = grounded_instruction_for(scene)
            save_image(grounded.grounded_image, frames_dir / f"{args.family}_{i:03d}_grounded.png")
        print(f"wrote {2 * args.scenes} inspection frames to {frames_dir}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    uvicorn.run(create_app(ServiceConfig.from_env()), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groundkit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"groundkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("annotate", help="annotate episodes with grounding boxes")
    p.add_argument("--root", required=True)
    p.add_argument("--episodes", default="*")
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--mock", default="off", help="replay tape path, or 'off' for the live model")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("audit", help="draw a seeded audit batch from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="audit.json")
    p.add_argument("--render-dir", default="")
    p.add_argument("--root", default="")
    p.add_argument("--score", default="", help="score a reviewed batch file instead of drawing")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("render", help="render a grounding format for one image")
    p.add_argument("--format", choices=[f.value for f in GroundingFormat], required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--box", type=_norm_box, required=True, help="x1,y1,x2,y2 fractions")
    p.add_argument("--out", default="out.png")
    p.add_argument("--text", default="pick up")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("augment", help="augment the visual samples of a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--root", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-shift", type=float, default=0.1)
    p.add_argument("--cutmix", default="0.1:0.5")
    p.add_argument("--patch-pool", default="")
    p.add_argument("--apply-prob", type=float, default=0.5)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("mix", help="build a co-training mixture of two manifests")
    p.add_argument("--text", required=True)
    p.add_argument("--visual", required=True)
    p.add_argument("--ratio", default="1:1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("sim", help="run simulator trials and report success rates")
    p.add_argument(
        "--family",
        choices=["clutter", "egg-pick", "egg-place", "plain-place", "irregular", "ood"],
        required=True,
    )
    p.add_argument("--policy", choices=["text", "grounded", "both"], default="both")
    p.add_argument("--trials", type=int, default=30, help="trials per scene")
    p.add_argument("--scenes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", default="")
    p.add_argument("--frames-dir", default="", help="dump each scene's overhead and grounded views")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8787)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
