# ui/explorer_ui.py
from __future__ import annotations

import pathlib

import numpy as np
import streamlit as st

from harness.pipeline import SpanView, predict_one
from model.checkpoint import CheckpointError, load_checkpoint, load_checkpoint_vocab, read_manifest
from model.span_decoder import DecodeMode
from nlp.reformulation import ReformulationError, TaskKind
from nlp.tasks import TASK_TEMPLATES
from nlp.tokenizer import EncodingError
from utils import settings

# ────────────────────────────────────────────────────────────── Loading


@st.cache_resource(show_spinner=False)
def _load(checkpoint_dir: str):
    model = load_checkpoint(checkpoint_dir)
    vocab = load_checkpoint_vocab(checkpoint_dir)
    metadata = read_manifest(checkpoint_dir).get("metadata", {})
    return model, vocab, metadata


def _default_checkpoint() -> str:
    try:
        return settings.get("SPANEX_CHECKPOINT_DIR")
    except KeyError:
        return ""


# ───────────────────────────────────────────────────────────── Rendering


def _highlight(view: SpanView) -> str:
    last = max(view.start, view.end)
    parts = []
    for i, tok in enumerate(view.source_tokens):
        parts.append(f"**:orange[{tok}]**" if view.start <= i <= last else tok)
    return " ".join(parts)


def _show_distributions(view: SpanView) -> None:
    st.bar_chart(
        {
            "start": np.asarray(view.p_start, dtype=float),
            "end": np.asarray(view.p_end, dtype=float),
        }
    )
    st.caption(" · ".join(f"{i}:{tok}" for i, tok in enumerate(view.source_tokens)))


# ───────────────────────────────────────────────────────────── Main UI


def explorer() -> None:
    st.title("🔎 Span Explorer")

    checkpoint_dir = st.sidebar.text_input("Checkpoint directory", value=_default_checkpoint())
    if not checkpoint_dir:
        st.info("Point the sidebar at a checkpoint directory written by `cli.py train`.")
        return
    if not pathlib.Path(checkpoint_dir).is_dir():
        st.error(f"No such directory: {checkpoint_dir}")
        return
    try:
        model, vocab, metadata = _load(checkpoint_dir)
    except CheckpointError as e:
        st.error(f"🚨 {e}")
        return

    st.sidebar.caption(
        f"{model.config.num_layers} layers · d={model.config.hidden_dim} · vocab {len(vocab)}"
    )
    default_max_len = int(metadata.get("max_len") or settings.get_int("SPANEX_MAX_LEN"))
    max_len = st.sidebar.number_input("max_len", min_value=3, value=default_max_len)
    mode = st.sidebar.radio("Decoding", [m.value for m in DecodeMode], horizontal=True)

    names = sorted(TASK_TEMPLATES)
    task = st.selectbox("Task template", names, index=names.index("squad"))
    template = TASK_TEMPLATES[task]

    with st.form("explore_form", clear_on_submit=False):
        if template.kind is TaskKind.QA:
            text_a = st.text_area("Context")
            text_b = st.text_input("Question")
        elif template.single_sentence:
            text_a = st.text_area("Sentence")
            text_b = None
        else:
            text_a = st.text_area("First sentence")
            text_b = st.text_area("Second sentence")
        definitional = st.checkbox(
            "Definitional label descriptions",
            disabled=template.definitional_labels is None,
        )
        submitted = st.form_submit_button("▶️ Extract span", type="primary")

    if not submitted:
        return
    try:
        source, auxiliary = template.render_inputs(text_a, text_b, definitional=definitional)
        view = predict_one(model, source, auxiliary, vocab, max_len=int(max_len), mode=mode)
    except (ReformulationError, EncodingError, IndexError) as e:
        st.error(f"🚨 {e}")
        return

    st.subheader("Prediction")
    st.success(view.text or "(empty span)")
    st.markdown(_highlight(view))
    st.caption(f"tokens {view.start}..{view.end} · log score {view.log_score:.3f}")

    with st.expander("Model input"):
        st.text(f"source:    {source}\nauxiliary: {auxiliary}")

    st.subheader("Start / end distributions")
    _show_distributions(view)
