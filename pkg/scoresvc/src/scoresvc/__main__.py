"""Run the scoring service: `python -m scoresvc` or the `scoresvc` script."""

import argparse

import uvicorn

from .app import DEFAULT_EMBED_MODEL, DEFAULT_NLI_MODEL, ServiceConfig, create_app


def main():
    parser = argparse.ArgumentParser(prog="scoresvc")
    parser.add_argument("--embed-model", default=DEFAULT_EMBED_MODEL,
                        help="sentence-transformers model id, or hash://bow-256")
    parser.add_argument("--nli-model", default=DEFAULT_NLI_MODEL,
                        help="NLI model id, or overlap://lexical")
    parser.add_argument("--port", type=int, default=8090)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--max-batch", type=int, default=64)
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()

    config = ServiceConfig(embed_model_id=args.embed_model,
                           nli_model_id=args.nli_model,
                           port=args.port, max_batch=args.max_batch)
    uvicorn.run(create_app(config), host=args.host, port=config.port,
                workers=args.workers)


if __name__ == "__main__":
    main()
