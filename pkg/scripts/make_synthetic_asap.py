"""Write an ASAP-shaped TSV of synthetic essays whose grades are learnable."""

import argparse

from cdln.synthetic import asap_like_rows, write_asap_tsv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out")
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--prompt", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--mean-tokens", type=int, default=350)
    args = ap.parse_args()
    write_asap_tsv(asap_like_rows(args.n, args.prompt, args.seed, args.mean_tokens), args.out)
    print(f"wrote {args.n} essays to {args.out}")


if __name__ == "__main__":
    main()
