#!/usr/bin/env python3
"""Convert a published strain table into the signal CSV read by `fsstn`.

The source is a URL or a local path to a whitespace separated text table
whose first two columns are time and strain (lines starting with `#` are
ignored), such as the observed Hanford strain table distributed with the
GW150914 data release on the Gravitational Wave Open Science Center.

By default the time column is rewritten as n / 4096 so that the record,
zero padded to 4096 samples with `--pad-pow2`, spans one time unit and
`--sigma 0.05` is a width relative to the padded frame. Pass `--keep-time`
to keep the original time stamps instead.

Example:
    python3 scripts/fetch_gw_strain.py SOURCE strain.csv
    fsstn reconstruct --input strain.csv --pad-pow2 --sigma 0.05 --K 1 \
        --method fsst4 --output-dir gw
"""

import argparse
import csv
import sys
import urllib.request


def read_source(source: str) -> str:
    if source.startswith(("http://", "https://")):
        with urllib.request.urlopen(source, timeout=60) as resp:
            return resp.read().decode("utf-8")
    with open(source, encoding="utf-8") as fh:
        return fh.read()


def parse_table(text: str) -> list[tuple[float, float]]:
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.replace(",", " ").split()
        try:
            rows.append((float(fields[0]), float(fields[1])))
        except (IndexError, ValueError):
            continue
    return rows


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("source", help="URL or path of the strain table")
    ap.add_argument("output", help="CSV file to write")
    ap.add_argument("--unit-rate", type=float, default=4096.0,
                    help="samples per time unit of the rewritten time axis")
    ap.add_argument("--keep-time", action="store_true",
                    help="keep the original time stamps")
    args = ap.parse_args()

    rows = parse_table(read_source(args.source))
    if len(rows) < 2:
        print("no (time, strain) rows found", file=sys.stderr)
        return 1
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "value"])
        for n, (t, h) in enumerate(rows):
            w.writerow([repr(t if args.keep_time else n / args.unit_rate), repr(h)])
    print(f"wrote {len(rows)} samples to {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
