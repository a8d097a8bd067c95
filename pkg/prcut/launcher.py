"""
Launch the PRCut run browser (Streamlit) with sensible server settings.
"""
import os
import subprocess
import sys
from pathlib import Path

from prcut import config


def launch(runs_dir: str = config.RUNS_DIR, port: int = config.DASHBOARD_PORT) -> int:
    """Run `streamlit run prcut/client.py`; returns a CLI exit code."""
    package_root = Path(__file__).parent
    app_path = package_root / "client.py"
    if not app_path.exists():
        print(f"❌ Error: dashboard script not found at {app_path}")
        return 1

    print("🚀 Launching PRCut Run Browser...")
    print(f"📁 Runs directory: {Path(runs_dir).resolve()}")
    print("-" * 60)

    env = os.environ.copy()
    env.update({
        "PRCUT_RUNS_DIR": str(runs_dir),
        "PYTHONPATH": os.pathsep.join(filter(None, [str(package_root.parent), env.get("PYTHONPATH", "")])),
        "STREAMLIT_BROWSER_GATHER_USAGE_STATS": "false",
    })
    cmd = [
        sys.executable, "-m", "streamlit", "run",
        str(app_path),
        "--server.port", str(port),
        "--server.headless", "true",
        "--browser.gatherUsageStats", "false",
    ]

    try:
        print(f"🌐 Dashboard will be available at: http://localhost:{port}")
        print("⚡ Press Ctrl+C to stop the server")
        print()
        subprocess.run(cmd, env=env, check=True)
    except KeyboardInterrupt:
        print("\n👋 Run browser stopped.")
    except subprocess.CalledProcessError as e:
        print(f"❌ Error launching dashboard: {e}")
        return 1
    except FileNotFoundError:
        print("❌ Error: Streamlit not found. Please install it with:")
        print("   uv sync")
        return 1
    return 0
