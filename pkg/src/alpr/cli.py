"""Operator and developer entry points.

Exit codes: 0 success, 1 environment error, 2 input error, 3 degenerate data.
"""

from __future__ import annotations

import argparse
import json
import signal
import sys
from pathlib import Path

from . import evaluation, geometry, imaging, ocr, pipeline, service
from .backends import build_backends
from .config import PipelineConfig, load_config
from .errors import (
    AlprError,
    ConfigError,
    DegenerateHistogram,
    MalformedLine,
    ShapeMismatch,
    SourceUnavailable,
)
from .sources import open_source
from .store import Store

EXIT_OK = 0
EXIT_ENV = 1
EXIT_INPUT = 2
EXIT_DEGENERATE = 3


def _load_config(path: str | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    return load_config(path)


def cmd_run(args) -> int:
    config = _load_config(args.config)
    if args.source:
        config.source = args.source
    if args.out:
        config.store_path = args.out
    backends = build_backends(config)
    source = open_source(config.source, config.stream_format, config.decoder_cmd)
    with Store(config.store_path) as store:
        summary = pipeline.run(
            source,
            sink=lambda event, crop: store.append(event, crop),
            config=config,
            backends=backends,
        )
    print(
        f"frames={summary.frames_in} processed={summary.frames_processed} "
        f"gated={summary.frames_gated} dropped={summary.frames_dropped} "
        f"events={summary.events} elapsed_ms={summary.elapsed_ms:.1f} "
        f"fps={summary.fps:.2f}"
    )
    if summary.error:
        print(f"error: {summary.error}", file=sys.stderr)
        return EXIT_ENV
    return EXIT_OK


def cmd_serve(args) -> int:
    config = _load_config(args.config)
    if args.port is not None:
        config.port = args.port
    svc = service.AlprService(config)
    try:
        server = service.serve(svc)
    except OSError as e:
        print(f"cannot bind {config.bind_address}:{config.port}: {e}", file=sys.stderr)
        svc.close()
        return EXIT_ENV

    def shut_down(signum, frame):
        raise KeyboardInterrupt

    signal.signal(signal.SIGTERM, shut_down)
    host, port = server.server_address[:2]
    print(f"serving on http://{host}:{port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        server.server_close()
        final = svc.state()
        svc.close()
        print(f"stopped; final state: {json.dumps(final, ensure_ascii=False)}")
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.f1 is not None:
        p, r = args.f1
        print(f"{evaluation.f1(p, r):.2f}")
        return EXIT_OK
    if not args.pred or not args.gt:
        print("eval needs --pred and --gt (or --f1 P R)", file=sys.stderr)
        return EXIT_INPUT
    preds = evaluation.parse_predictions_ndjson(args.pred)
    gts = evaluation.parse_darknet_annotations(args.gt)
    report = evaluation.evaluate(preds, gts, args.iou, args.cutoff)
    print(report.to_json() if args.json else report.render())
    return EXIT_OK


def cmd_preprocess(args) -> int:
    img = imaging.read_image(args.image)
    prepared = ocr.preprocess_plate(img)
    imaging.write_image(args.out, prepared.image)
    print(f"threshold: {prepared.threshold}")
    return EXIT_OK


def cmd_decode(args) -> int:
    raw, s, a, cl = geometry.load_tensor(args.tensor)
    spec = geometry.load_head_spec(args.spec)
    if (s, a, cl) != (spec.grid_size, spec.anchor_count, spec.class_count):
        raise ShapeMismatch(
            f"tensor header S={s} A={a} CL={cl} disagrees with spec "
            f"S={spec.grid_size} A={spec.anchor_count} CL={spec.class_count}"
        )
    boxes = geometry.nms(geometry.decode_head(raw, spec, args.conf), args.nms)
    for box in boxes:
        print(
            json.dumps(
                {
                    "cx": box.cx,
                    "cy": box.cy,
                    "w": box.w,
                    "h": box.h,
                    "class_id": box.class_id,
                    "score": box.score,
                },
                ensure_ascii=False,
            )
        )
    return EXIT_OK


def cmd_query(args) -> int:
    path = Path(args.store)
    if not path.is_file():
        print(f"store not found: {path}", file=sys.stderr)
        return EXIT_ENV
    with Store(path) as store:
        for record in store.query_by_plate(args.plate):
            print(record.to_json())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="alpr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the pipeline on a frame source")
    p_run.add_argument("--source", help="frame directory, or '-' for stdin")
    p_run.add_argument("--config", help="flat key=value config file")
    p_run.add_argument("--out", help="events NDJSON path (defaults to store_path)")
    p_run.set_defaults(func=cmd_run)

    p_serve = sub.add_parser("serve", help="serve the operator HTTP API")
    p_serve.add_argument("--config", help="flat key=value config file")
    p_serve.add_argument("--port", type=int, help="override config port")
    p_serve.set_defaults(func=cmd_serve)

    p_eval = sub.add_parser("eval", help="score predictions against annotations")
    p_eval.add_argument("--pred", help="predictions NDJSON")
    p_eval.add_argument("--gt", help="darknet annotation directory")
    p_eval.add_argument("--iou", type=float, default=0.5)
    p_eval.add_argument("--cutoff", type=float, default=0.25)
    p_eval.add_argument("--json", action="store_true", help="emit NDJSON report")
    p_eval.add_argument("--f1", nargs=2, type=float, metavar=("P", "R"),
                        help="print F1 for a precision/recall pair and exit")
    p_eval.set_defaults(func=cmd_eval)

    p_pre = sub.add_parser("preprocess", help="binarize a plate image")
    p_pre.add_argument("--image", required=True, help="input PPM")
    p_pre.add_argument("--out", required=True, help="output PGM")
    p_pre.set_defaults(func=cmd_preprocess)

    p_dec = sub.add_parser("decode", help="decode a raw head tensor file")
    p_dec.add_argument("--tensor", required=True)
    p_dec.add_argument("--spec", required=True, help="head spec key=value file")
    p_dec.add_argument("--conf", type=float, default=0.25)
    p_dec.add_argument("--nms", type=float, default=0.45)
    p_dec.set_defaults(func=cmd_decode)

    p_query = sub.add_parser("query", help="look up events by plate text")
    p_query.add_argument("--store", required=True)
    p_query.add_argument("--plate", required=True)
    p_query.set_defaults(func=cmd_query)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DegenerateHistogram as e:
        print(f"degenerate data: {e}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (ConfigError, MalformedLine, ShapeMismatch) as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (SourceUnavailable, FileNotFoundError) as e:
        print(f"environment error: {e}", file=sys.stderr)
        return EXIT_ENV
    except AlprError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ENV


if __name__ == "__main__":
    sys.exit(main())
