import streamlit as st

RUN_BROWSER_CSS = """
<style>
.main {
    padding-top: 2rem;
}

.stApp {
    background: white;
}

.run-card {
    background: linear-gradient(145deg, #f0f2f6, #ffffff);
    padding: 1.5rem;
    border-radius: 12px;
    box-shadow: 0 4px 15px rgba(0, 0, 0, 0.1);
    margin: 1rem 0;
    border-left: 4px solid #667eea;
}

.config-box {
    background: linear-gradient(145deg, #f8f9fa, #ffffff);
    padding: 1rem 1.5rem;
    border-radius: 10px;
    border: 1px solid #e9ecef;
    margin: 1rem 0;
    font-family: monospace;
    font-size: 0.85rem;
}

.flag-badge {
    background: linear-gradient(145deg, #ff6b6b, #ee5a24);
    color: white;
    padding: 0.2rem 0.6rem;
    border-radius: 10px;
    font-size: 0.75rem;
    margin: 0.1rem;
    display: inline-block;
}

.title-gradient {
    background: linear-gradient(135deg, #667eea 0%, #764ba2 100%);
    -webkit-background-clip: text;
    -webkit-text-fill-color: transparent;
    background-clip: text;
    font-size: 2.6rem;
    font-weight: bold;
    text-align: center;
    margin-bottom: 0.5rem;
}

.subtitle {
    text-align: center;
    color: #666;
    font-size: 1.1rem;
    margin-bottom: 2rem;
}
</style>
"""


def apply_css():
    st.markdown(RUN_BROWSER_CSS, unsafe_allow_html=True)


def flag_badges(flags) -> str:
    return " ".join(f'<span class="flag-badge">{flag}</span>' for flag in flags)
