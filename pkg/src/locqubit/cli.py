"""Command line: ``locqubit run|sweep <config>`` and ``locqubit preset <name>``.

Outputs go to ``--out``, else ``$LOCQUBIT_OUT/<name>``, else
``./locqubit-out/<name>``. Failures print one JSON object on stderr and exit
with a code identifying the failure class.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path

from .config import ConfigError, load, loads
from .lambda_control import InfeasibleGateError
from .lindblad import IntegrationError
from .qcore import StateError

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_SCHEMA = 2
EXIT_INFEASIBLE = 3
EXIT_INTEGRATOR = 4
EXIT_NUMERICAL = 5
OUT_ENV = "LOCQUBIT_OUT"


class PresetError(KeyError):
    pass


def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("locqubit.presets").iterdir() if p.name.endswith(".yaml"))


def preset_text(name: str) -> str:
    if name not in preset_names():
        raise PresetError(f"unknown preset {name!r}; known: {', '.join(preset_names())}")
    return resources.files("locqubit.presets").joinpath(f"{name}.yaml").read_text()


def figure_preset(name: str) -> dict:
    """Validated config dict of a checked-in preset."""
    return loads(preset_text(name))


def _default_out(stem: str) -> Path:
    base = os.environ.get(OUT_ENV)
    return Path(base) / stem if base else Path("locqubit-out") / stem


def _fail(code: int, kind: str, exc: BaseException) -> int:
    print(json.dumps({"error": kind, "message": str(exc), "exit_code": code}), file=sys.stderr)
    return code


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="locqubit", description="Location-qubit gate simulations and device rates.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV}/<name>)")
    common.add_argument("--validate-only", action="store_true", help="check the config and exit")
    common.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="run one experiment config")
    p.add_argument("config", type=Path)
    p = sub.add_parser("sweep", parents=[common], help="run a sweep-type experiment config")
    p.add_argument("config", type=Path)
    p = sub.add_parser("preset", parents=[common], help="run a checked-in figure preset")
    p.add_argument("name", nargs="?")
    p.add_argument("--list", action="store_true", help="list preset names")
    p.add_argument("--print", dest="show", action="store_true", help="print the preset config")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.threads < 1:
        return _fail(EXIT_SCHEMA, "usage", ValueError("--threads must be at least 1"))
    try:
        if args.command == "preset":
            if args.list:
                print("\n".join(preset_names()))
                return EXIT_OK
            if not args.name:
                raise ConfigError("preset name required")
            text = preset_text(args.name)
            if args.show:
                print(text, end="")
                return EXIT_OK
            raw, stem = loads(text), args.name
        else:
            raw, stem = load(args.config), args.config.stem
            if args.command == "sweep":
                from .experiments import SWEEP_KINDS

                if raw["experiment"] not in SWEEP_KINDS:
                    raise ConfigError(f"experiment {raw['experiment']!r} is not a sweep; use 'run'")
    except (ConfigError, PresetError) as exc:
        return _fail(EXIT_SCHEMA, "schema", exc)
    if args.validate_only:
        print(json.dumps({"valid": True, "experiment": raw["experiment"]}))
        return EXIT_OK

    from .experiments import run_experiment

    try:
        bundle = run_experiment(raw, args.threads)
    except ConfigError as exc:
        return _fail(EXIT_SCHEMA, "schema", exc)
    except InfeasibleGateError as exc:
        return _fail(EXIT_INFEASIBLE, "infeasible", exc)
    except IntegrationError as exc:
        return _fail(EXIT_INTEGRATOR, "integrator", exc)
    except (ArithmeticError, StateError, ValueError) as exc:
        return _fail(EXIT_NUMERICAL, "numerical", exc)
    except Exception as exc:  # noqa: BLE001
        return _fail(EXIT_INTERNAL, "internal", exc)
    out = args.out or _default_out(stem)
    paths = bundle.write(out)
    print(json.dumps({"out": str(out), "files": [p.name for p in paths], "summary": bundle.summary}, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
