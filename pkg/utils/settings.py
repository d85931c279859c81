# utils/settings.py
from __future__ import annotations

import os

from dotenv import load_dotenv

load_dotenv()

DEFAULTS: dict[str, str] = {
    "SPANEX_LOG_LEVEL": "INFO",
    "SPANEX_MAX_LEN": "128",
    "SPANEX_DTYPE": "float64",
}


def _streamlit_secrets():
    """Return st.secrets when running inside a Streamlit script, else None."""
    try:
        import streamlit as st
        from streamlit.runtime import exists as _runtime_exists
    except ImportError:
        return None
    if not _runtime_exists():
        return None
    return st.secrets


def get(key: str, *, default: str | None = None) -> str:
    """
    Fetch a setting in a way that works both from the CLI and the explorer app.

    1. If the key exists in st.secrets (Streamlit runtime only) → return it.
    2. Else fall back to os.environ (what `python-dotenv` fills from .env).
    3. Else the caller's default, then the built-in DEFAULTS.
    4. If the key is still missing → raise KeyError.
    """
    secrets = _streamlit_secrets()
    if secrets is not None:
        try:
            # st.secrets raises when no secrets.toml is present
            if key in secrets:
                return str(secrets[key])
        except Exception:
            pass

    val = os.getenv(key)
    if val is None:
        val = default if default is not None else DEFAULTS.get(key)

    if val is None:
        raise KeyError(f"Missing setting: {key}")

    return val


def get_int(key: str, *, default: int | None = None) -> int:
    raw = get(key, default=None if default is None else str(default))
    try:
        return int(raw)
    except ValueError as e:
        raise ValueError(f"Setting {key} must be an integer, got {raw!r}") from e
