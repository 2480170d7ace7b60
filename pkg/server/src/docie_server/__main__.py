"""CLI: serve the scorer protocol or fine-tune the model.

    docie-server serve    --labels company,address --transport stdio
    docie-server finetune --dataset data/receipts --mode tc --epochs 2
"""

from __future__ import annotations

import argparse

from .engine import build_engine
from .finetune import TrainConfig, finetune
from .server import make_http_server, serve_stdio


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="docie-server", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="answer score requests over stdio or HTTP")
    p.add_argument("--labels", default=None, help="comma-separated label set for the tagging head")
    p.add_argument("--dataset", default=None, help="canonical dataset dir; its label set configures the tagging head")
    p.add_argument("--checkpoint", default=None, help="model checkpoint from a finetune run")
    p.add_argument("--max-len", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--device", default="cpu")
    p.add_argument("--transport", choices=["stdio", "http"], default="stdio")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)

    p = sub.add_parser("finetune", help="train a head and log per-epoch validation F1")
    p.add_argument("--dataset", required=True,
                   help="canonical dataset dir (tc) or directory of SQuAD-style files (qa)")
    p.add_argument("--mode", choices=["qa", "tc"], required=True)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--lr", type=float, default=2e-5)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--grad-accumulation", type=int, default=2)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--max-len", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--device", default="cpu")
    p.add_argument("--save", default=None, help="checkpoint output path")

    args = parser.parse_args(argv)
    if args.command == "serve":
        labels = None
        if args.labels:
            labels = args.labels.split(",")
        elif args.dataset:
            from .data import load_canonical

            labels, _ = load_canonical(args.dataset)
        engine = build_engine(labels, args.checkpoint, args.max_len, args.seed, args.device)
        if args.transport == "stdio":
            serve_stdio(engine)
            return 0
        server = make_http_server(engine, args.host, args.port)
        print(f"LISTENING {server.server_address[0]}:{server.server_address[1]}", flush=True)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        return 0

    cfg = TrainConfig(
        mode=args.mode,
        epochs=args.epochs,
        lr=args.lr,
        batch_size=args.batch_size,
        grad_accumulation=args.grad_accumulation,
        patience=args.patience,
        max_len=args.max_len,
        seed=args.seed,
        device=args.device,
    )
    finetune(args.dataset, cfg, save_path=args.save)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
