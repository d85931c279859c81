import streamlit as st

st.set_page_config(page_title="Span Explorer", layout="centered")

from ui.explorer_ui import explorer


def reset_explorer_state():
    st.cache_resource.clear()


st.sidebar.button("🔁 Reload checkpoint", on_click=reset_explorer_state)
explorer()
