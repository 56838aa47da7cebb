"""Entry point: epsn-bridge --listen host:port (--checkpoint path | --dry-run)."""

import argparse
import sys

from .model import PredictError, TorchPredictor, zero_predictor
from .server import BridgeServer


def parse_listen(value: str) -> tuple[str, int]:
    host, sep, port = value.rpartition(":")
    if not sep or not host:
        raise ValueError(f"--listen needs host:port, got {value!r}")
    return host, int(port)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="epsn-bridge",
        description="Serve diffusion noise predictions over the EPSN protocol.")
    parser.add_argument("--listen", default="127.0.0.1:9500", help="host:port to bind")
    parser.add_argument("--checkpoint", help="TorchScript or pickled module path")
    parser.add_argument("--dry-run", action="store_true",
                        help="answer every request with zeros of the request shape")
    args = parser.parse_args(argv)

    if bool(args.checkpoint) == args.dry_run:
        parser.error("exactly one of --checkpoint or --dry-run is required")
    try:
        host, port = parse_listen(args.listen)
    except ValueError as exc:
        parser.error(str(exc))

    if args.dry_run:
        predictor = zero_predictor
    else:
        try:
            predictor = TorchPredictor(args.checkpoint)
        except PredictError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1

    server = BridgeServer(predictor, host, port)
    mode = "dry-run" if args.dry_run else args.checkpoint
    print(f"listening on {server.address} ({mode})", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
