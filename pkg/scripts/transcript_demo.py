"""Record a short eavesdropped AP2 run to JSONL, read it back and print each session."""

from __future__ import annotations

import argparse
from pathlib import Path

from proactive_auth.channel import AdversaryModel, read_jsonl, run_sessions, write_jsonl
from proactive_auth.core import SecretVector
from proactive_auth.harness import config_from_dict, make_endpoints
from proactive_auth.padstream import PadStream


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--protocol", default="ap2", choices=("ap1", "ap2", "ap2t"))
    ap.add_argument("--sessions", type=int, default=6)
    ap.add_argument("--out", type=Path, default=Path("results/transcript.jsonl"))
    args = ap.parse_args()

    cfg = config_from_dict({"protocol": args.protocol, "n": 4, "l": 16, "keyword_len": 8, "trials": 1})
    arv = SecretVector.random(PadStream(11), cfg.params.n, cfg.params.l)
    tag, verifier = make_endpoints(cfg, arv, PadStream(12))
    # listen to the first half, then probe forgeries without disturbing the pair
    half = args.sessions // 2
    adv = AdversaryModel(
        "impersonate",
        listening=(True,) * half + (False,) * (args.sessions - half),
        attacking=(False,) * half + (True,) * (args.sessions - half),
        attempts_per_session=1,
        commit=False,
        seed=13,
    )
    result = run_sessions(tag, verifier, adv, args.sessions)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_jsonl(result.transcripts, args.out)

    for t in read_jsonl(args.out):
        msg = t.decoded()
        bits = "-" if msg is None else f"{len(msg.payload)} bits"
        verdict = "-" if t.verdict is None else t.verdict
        print(f"session {t.session_index:2d} {t.origin:9s} {bits:>9s} verdict={verdict} heard={t.observed_by_adversary}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
