import sys
from pathlib import Path

import pandas as pd
import streamlit as st

sys.path.insert(0, str(Path(__file__).parent / "backend"))

from app.libs.bench import COLUMNS, summarize_results  # noqa: E402

st.title("winmapf benchmark results")

uploaded_file = st.file_uploader("Upload a benchmark CSV", type=["csv"])

if uploaded_file:
    df = pd.read_csv(uploaded_file)
    missing = [c for c in COLUMNS if c not in df.columns]

    if missing:
        st.error(f"Not a benchmark CSV, missing columns: {', '.join(missing)}")
    else:
        st.subheader("Summary (failed episodes excluded from cost)")
        st.write(summarize_results(df))

        st.subheader("Rows")
        st.write(df)
