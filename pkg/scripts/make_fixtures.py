"""Regenerate the scripted-advisor fixture files of the bundled benchmarks.

Fixture keys embed the (domain, problem) signature, so they must be rebuilt
whenever a benchmark's domain or problem text changes.
"""

import json
import sys

from hybridplan.benchmarks import asset_path, load_benchmark
from hybridplan.signature import create_signature

TURN_ON = ("(:action turn-on-microwave\n"
           "  :parameters (?r - robot ?m - appliance ?l - location)\n"
           "  :precondition (and (at ?r ?l) (appliance-at ?m ?l))\n"
           "  :effect (and (microwave-on ?m)))")


def beer() -> dict:
    b = load_benchmark("beer")
    sig = str(create_signature(b.domain, b.problem))
    fixed = b.golden["llm"].lines()
    return {
        f"review:{sig}": {
            "cases": [{"plan": fixed, "response": {"is_good": True, "feedback": ""}}],
            "default": {"is_good": False,
                        "feedback": "plan is missing close-fridge after pick-up-beer"},
        },
        f"fix:{sig}": {"plan": fixed},
    }


def microwave_flawed() -> dict:
    b = load_benchmark("microwave-flawed")
    sig = str(create_signature(b.domain, b.problem))
    return {
        f"gap:{sig}": {
            "missing_actions": ["turn-on-microwave"],
            "action_definitions": {"turn-on-microwave": TURN_ON},
            "missing_preconditions": [{
                "action": "wait-finish",
                "atom": "microwave-on(microwave1)",
                "why": "no action makes microwave-on true, so wait-finish can never run",
            }],
            "suggested_plan": [
                "move(robot1, kitchen-counter, microwave-loc)",
                "open-door(robot1, microwave1, microwave-loc)",
                "put-in(robot1, soup-bowl, microwave1, microwave-loc)",
                "turn-on-microwave(robot1, microwave1, microwave-loc)",
                "wait-finish(robot1, microwave1, soup-bowl, microwave-loc)",
                "take-out(robot1, soup-bowl, microwave1, microwave-loc)",
                "close-door(robot1, microwave1, microwave-loc)",
                "move(robot1, microwave-loc, kitchen-counter)",
                "put-down(robot1, soup-bowl, kitchen-counter)",
            ],
            "rationale": "the domain has no action that switches the microwave on; "
                         "adding one makes food-hot reachable",
        },
    }


def main() -> int:
    for name, doc in (("beer", beer()), ("microwave-flawed", microwave_flawed()),
                      ("microwave-fixed", {})):
        path = asset_path(name, "fixtures.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {path}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
