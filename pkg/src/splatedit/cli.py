"""splatedit command-line interface.

    splatedit import  --ply scene.ply --labels-json l.json --labels-bin l.bin \
                      --min-confidence 0.8 --session DIR
    splatedit edit    --session DIR --prompt "remove the stool ..." --out out.ply
    splatedit ground  --session DIR --prompt "..." --trace trace.json
    splatedit undo    --session DIR
    splatedit preview --session DIR --azimuth 45 --elevation 30 --out img.png
    splatedit assets  add --session DIR --name vase --ply vase.ply
    splatedit serve   --session DIR --port 7331 [--scorer-url URL]
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import SplatEditError
from .session import Session, SessionConfig


def _bool_flag(value: str) -> bool:
    if value.lower() in ("on", "true", "1", "yes"):
        return True
    if value.lower() in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splatedit",
                                     description="Prompt-driven 3D Gaussian scene editing")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("import", help="create a session from a scene + label sidecar")
    p.add_argument("--ply", required=True)
    p.add_argument("--labels-json", required=True)
    p.add_argument("--labels-bin", required=True)
    p.add_argument("--min-confidence", type=float, default=0.8)
    p.add_argument("--session", required=True)
    p.add_argument("--up-axis", choices=("z", "y"), default="z")
    p.add_argument("--knn-k", type=int, default=16)
    p.add_argument("--assets-dir", default=None)

    p = sub.add_parser("edit", help="apply one editing prompt")
    p.add_argument("--session", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument("--out", help="also export the edited scene to this PLY")
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--step-ratio", type=float, default=None)
    p.add_argument("--max-move-ratio", type=float, default=None)
    p.add_argument("--inpaint", type=_bool_flag, default=None, metavar="{on,off}")
    p.add_argument("--keep-sh-rest", action="store_const", const=True, default=None)
    p.add_argument("--knn-k", type=int, default=None)

    p = sub.add_parser("ground", help="ground a prompt without editing")
    p.add_argument("--session", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument("--trace", help="write the grounding result + trace JSON here")

    p = sub.add_parser("undo", help="revert the latest edit")
    p.add_argument("--session", required=True)

    p = sub.add_parser("preview", help="render an orthographic preview PNG")
    p.add_argument("--session", required=True)
    p.add_argument("--azimuth", type=float, default=45.0)
    p.add_argument("--elevation", type=float, default=30.0)
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--crop-id", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("assets", help="manage generated assets")
    asub = p.add_subparsers(dest="assets_command", required=True)
    pa = asub.add_parser("add", help="register an asset PLY under a name")
    pa.add_argument("--session", required=True)
    pa.add_argument("--name", required=True)
    pa.add_argument("--ply", required=True)
    pl = asub.add_parser("list", help="list registered assets")
    pl.add_argument("--session", required=True)

    p = sub.add_parser("serve", help="run the local HTTP API")
    p.add_argument("--session", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7331)
    p.add_argument("--scorer-url", default=None)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _dispatch(args)
    except SplatEditError as exc:
        print(f"error [{exc.stage}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "import":
        config = SessionConfig(
            min_confidence=args.min_confidence,
            up_axis=args.up_axis,
            knn_k=args.knn_k,
            assets_dir=args.assets_dir,
        )
        session = Session.import_session(
            args.ply, args.labels_json, args.labels_bin,
            min_confidence=args.min_confidence,
            session_dir=args.session, config=config,
        )
        meta = session.meta()
        print(f"imported {meta['splat_count']} splats, "
              f"{len(meta['instances'])} instances -> {session.dir}")
        return 0

    if args.command == "edit":
        session = Session.open(args.session)
        outcome = session.edit(
            args.prompt,
            kappa=args.kappa,
            step_ratio=args.step_ratio,
            max_move_ratio=args.max_move_ratio,
            inpaint=args.inpaint,
            keep_sh_rest=args.keep_sh_rest,
            knn_k=args.knn_k,
        )
        if args.out:
            session.export(args.out)
        t = outcome.timings
        print(
            f"edit #{outcome.journal_id} ok: {outcome.entry.describe()}\n"
            f"timings: parse {t['parse']:.3f}s  ground {t['ground']:.3f}s "
            f"(cache_hit={t['cache_hit']}, scorer_calls={t['scorer_calls']})  "
            f"edit {t['edit']:.3f}s  total {t['total']:.3f}s"
        )
        return 0

    if args.command == "ground":
        session = Session.open(args.session)
        bundle, cache_hit, _ = session.ground_prompt(args.prompt)
        result = bundle.primary
        payload = {"cache_hit": cache_hit, **bundle.to_json()}
        if args.trace:
            with open(args.trace, "w") as fh:
                json.dump(payload, fh, indent=2)
        w = result.winner
        print(f"winner: instance {w.instance_id} ({w.class_name}), score {w.score}")
        for stage in result.trace.stages:
            print(f"  {stage['stage']}: {stage['survivors']} {stage.get('note', '')}")
        return 0

    if args.command == "undo":
        session = Session.open(args.session)
        entry = session.undo()
        print(f"undid: {entry.describe()}")
        return 0

    if args.command == "preview":
        session = Session.open(args.session)
        image = session.preview(
            azimuth=args.azimuth, elevation=args.elevation,
            width=args.width, height=args.height, crop_id=args.crop_id,
        )
        with open(args.out, "wb") as fh:
            fh.write(image.to_png())
        print(f"wrote {args.out} ({image.width}x{image.height})")
        return 0

    if args.command == "assets":
        session = Session.open(args.session)
        if args.assets_command == "add":
            path = session.register_asset(args.name, args.ply)
            print(f"registered asset {args.name!r} at {path}")
        else:
            root = Path(session.config.assets_dir) if session.config.assets_dir \
                else session.dir / "assets"
            if root.exists():
                for item in sorted(root.iterdir()):
                    if (item / "asset.ply").exists():
                        print(item.name)
        return 0

    if args.command == "serve":
        from .server import serve

        session = Session.open(args.session)
        if args.scorer_url:
            session.config.scorer_url = args.scorer_url
        serve(session, host=args.host, port=args.port)
        return 0

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
