"""Regenerate every checked-in fixture artifact under corpus/.

Deterministic: run it twice and the files are byte-identical. The artifacts:

* ``corpus/problems.jsonl`` — the synthetic 12-problem corpus (the original
  study corpus is access-restricted, so this ships an equivalent-format one);
* ``corpus/fiber/`` — scripted backend profile reproducing the reference
  four-step walkthrough;
* ``corpus/compile_demo/`` — a gated corpus + scripted agent/teacher profiles
  for exercising the full compilation loop from the CLI;
* ``corpus/probes/`` — fan-effect probe recipes;
* ``corpus/ui_fixture/`` — a self-contained directory `cac serve` can host
  for the inspector UI (walkthrough KB, problems, backend profile, config).
"""

from __future__ import annotations

import json
from pathlib import Path

from cac.agent import Problem
from cac.fixtures import fiber_backend_table, fiber_kb, fiber_problem, fixture_embedder
from cac.scenarios import (
    GatedProblemSpec,
    full_overlap_probe,
    gated_backend_table,
    gated_problem,
    gated_teacher_script,
    zero_overlap_probe,
)
from cac.store import save_kb, save_problems

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"


def synthetic_problems() -> list[Problem]:
    rows = [
        fiber_problem(),
        Problem(
            id="oxygen-carrier-002",
            stem="Which molecule carries oxygen in red blood cells?",
            options={"A": "Keratin", "B": "Hemoglobin", "C": "Insulin", "D": "Amylase"},
            correct_letter="B",
            kc_tags=("protein-function",),
        ),
        Problem(
            id="atp-site-003",
            stem="Which organelle hosts most of a cell's ATP production?",
            options={"A": "Nucleus", "B": "Ribosome", "C": "Mitochondrion", "D": "Golgi apparatus"},
            correct_letter="C",
            kc_tags=("cell-organelles",),
        ),
        Problem(
            id="osmosis-004",
            stem="Which process moves water across a membrane toward higher solute concentration?",
            options={"A": "Osmosis", "B": "Active transport", "C": "Phagocytosis", "D": "Diffusion of solute"},
            correct_letter="A",
            kc_tags=("membrane-transport",),
        ),
        Problem(
            id="enzyme-class-005",
            stem="Most enzymes belong to which class of macromolecules?",
            options={"A": "Lipids", "B": "Nucleic acids", "C": "Carbohydrates", "D": "Proteins"},
            correct_letter="D",
            kc_tags=("protein-function",),
        ),
        Problem(
            id="photo-gas-006",
            stem="Which gas do plants take in as the carbon source for photosynthesis?",
            options={"A": "Oxygen", "B": "Carbon dioxide", "C": "Nitrogen", "D": "Methane"},
            correct_letter="B",
            kc_tags=("photosynthesis",),
        ),
        Problem(
            id="hereditary-unit-007",
            stem="Hereditary information in a cell is stored in which molecule?",
            options={"A": "DNA", "B": "ATP", "C": "Cellulose", "D": "Hemoglobin"},
            correct_letter="A",
            kc_tags=("genetics-basics",),
        ),
        Problem(
            id="sugar-transport-008",
            stem="Which plant tissue transports sugars from leaves to the rest of the plant?",
            options={"A": "Xylem", "B": "Phloem", "C": "Cuticle", "D": "Stomata"},
            correct_letter="B",
            kc_tags=("plant-anatomy",),
        ),
        Problem(
            id="clotting-cells-009",
            stem="Which blood components are central to forming a clot?",
            options={"A": "Platelets", "B": "Red blood cells", "C": "Plasma proteins only", "D": "White blood cells"},
            correct_letter="A",
            kc_tags=("circulatory-system",),
        ),
        Problem(
            id="ph-acid-010",
            stem="A solution with pH 3 is best described as what?",
            options={"A": "Strongly basic", "B": "Neutral", "C": "Acidic", "D": "Saturated"},
            correct_letter="C",
            kc_tags=("chemistry-basics",),
        ),
        Problem(
            id="producer-role-011",
            stem="In a food web, organisms that fix their own energy from light are called what?",
            options={"A": "Decomposers", "B": "Producers", "C": "Secondary consumers", "D": "Scavengers"},
            correct_letter="B",
            kc_tags=("ecology-basics",),
        ),
        Problem(
            id="mitosis-result-012",
            stem="Mitosis of one diploid cell normally yields what?",
            options={"A": "Two identical diploid cells", "B": "Four haploid cells", "C": "One tetraploid cell", "D": "Two haploid cells"},
            correct_letter="A",
            kc_tags=("cell-division",),
        ),
    ]
    return rows


def compile_demo_specs() -> list[GatedProblemSpec]:
    return [
        GatedProblemSpec(
            problem=gated_problem("demo-easy", "Which transformation needs no taught knowledge?"),
            gate_description=None,
        ),
        GatedProblemSpec(
            problem=gated_problem("demo-one", "Which transformation stores light energy as sugar?"),
            gate_description="Green tissue converts captured light into stored sugar energy.",
        ),
        GatedProblemSpec(
            problem=gated_problem("demo-slow", "Which transformation resists the first two lessons?"),
            gate_description="Stored sugar energy originates from captured light in green tissue.",
            junk_before_gate=2,
        ),
    ]


def write_backend_profile(directory: Path, table, name: str) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "rules.json").write_text(
        json.dumps(table.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    (directory / "backend.toml").write_text(
        f'kind = "scripted"\nname = "{name}"\n\n[scripted]\nrules = "rules.json"\n',
        encoding="utf-8",
    )


def write_probe(path: Path, config) -> None:
    lines = ["[probe]"]
    for key, value in config.to_dict().items():
        if isinstance(value, bool):
            lines.append(f"{key} = {str(value).lower()}")
        elif isinstance(value, (int, float)):
            lines.append(f"{key} = {value}")
        else:
            lines.append(f'{key} = "{value}"')
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def main() -> None:
    save_problems(synthetic_problems(), CORPUS / "problems.jsonl")
    write_backend_profile(CORPUS / "fiber", fiber_backend_table(), "fiber-walkthrough")

    specs = compile_demo_specs()
    demo_dir = CORPUS / "compile_demo"
    demo_dir.mkdir(parents=True, exist_ok=True)
    save_problems([spec.problem for spec in specs], demo_dir / "corpus.jsonl")
    (demo_dir / "agent_rules.json").write_text(
        json.dumps(gated_backend_table(specs).to_dict(), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    (demo_dir / "agent.toml").write_text(
        'kind = "scripted"\nname = "compile-demo-agent"\n\n[scripted]\nrules = "agent_rules.json"\n',
        encoding="utf-8",
    )
    script = {
        "problems": {
            pid: [[{"kind": call.kind, "args": call.args} for call in turn] for turn in turns]
            for pid, turns in gated_teacher_script(specs).items()
        }
    }
    (demo_dir / "teacher_script.json").write_text(
        json.dumps(script, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    (demo_dir / "teacher.toml").write_text(
        'kind = "scripted"\nname = "compile-demo-teacher"\n\n[scripted]\nscript = "teacher_script.json"\n',
        encoding="utf-8",
    )

    write_probe(CORPUS / "probes" / "full_overlap.toml", full_overlap_probe(n_max=500, n_step=10))
    write_probe(CORPUS / "probes" / "zero_overlap.toml", zero_overlap_probe(n_max=500, n_step=10))

    ui_dir = CORPUS / "ui_fixture"
    ui_dir.mkdir(parents=True, exist_ok=True)
    save_kb(fiber_kb(fixture_embedder()), ui_dir / "kb.jsonl")
    save_problems([fiber_problem()], ui_dir / "problems.jsonl")
    write_backend_profile(ui_dir, fiber_backend_table(), "fiber-walkthrough")
    (ui_dir / "cac.toml").write_text(
        "\n".join(
            [
                "[service]",
                'host = "127.0.0.1"',
                "port = 8765",
                'cors_origin = "*"',
                'kb = "kb.jsonl"',
                'problems = "problems.jsonl"',
                'runs_dir = "runs"',
                'backend_profile = "backend.toml"',
                'static_dir = "../../frontend/dist"',
            ]
        )
        + "\n",
        encoding="utf-8",
    )
    print(f"fixture files regenerated under {CORPUS}")


if __name__ == "__main__":
    main()
