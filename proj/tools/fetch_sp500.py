#!/usr/bin/env python3
"""Download S&P 500 closing prices and GICS sectors into the CSV layout
`cape ingest` reads.

Needs network access plus `pandas`, `lxml` and `yfinance` (none are
dependencies of the package itself):

    pip install pandas lxml yfinance
    python3 tools/fetch_sp500.py --start 2018-01-01 --end 2019-12-31 --out data/sp500
    cape ingest --prices data/sp500/prices.csv --sectors data/sp500/sectors.csv \
        --drop-incomplete --out out/sp500
"""

import argparse
import os
import sys

CONSTITUENTS = "https://en.wikipedia.org/wiki/List_of_S%26P_500_companies"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--start", required=True, help="first date, YYYY-MM-DD")
    ap.add_argument("--end", required=True, help="last date, YYYY-MM-DD")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--limit", type=int, default=0, help="keep only the first N tickers (0 = all)")
    args = ap.parse_args()

    try:
        import pandas as pd
        import yfinance as yf
    except ImportError as e:
        sys.exit(f"missing dependency: {e.name}; pip install pandas lxml yfinance")

    table = pd.read_html(CONSTITUENTS)[0]
    table["Symbol"] = table["Symbol"].str.replace(".", "-", regex=False)
    if args.limit:
        table = table.head(args.limit)
    tickers = list(table["Symbol"])

    prices = yf.download(tickers, start=args.start, end=args.end, auto_adjust=True, progress=False)["Close"]
    prices = prices.dropna(axis=1, how="all")
    prices.index = prices.index.strftime("%Y-%m-%d")
    prices.index.name = "date"

    os.makedirs(args.out, exist_ok=True)
    prices.to_csv(os.path.join(args.out, "prices.csv"), float_format="%.17g")
    sectors = table[table["Symbol"].isin(prices.columns)][["Symbol", "GICS Sector"]]
    sectors.columns = ["ticker", "sector"]
    sectors.to_csv(os.path.join(args.out, "sectors.csv"), index=False)
    print(f"wrote {prices.shape[1]} tickers x {prices.shape[0]} days to {args.out}")


if __name__ == "__main__":
    main()
