"""Print the two-request worked example and its final trees."""

import json

from slospec import scenarios


def main() -> None:
    plan = scenarios.plan()
    print(f"deficits: {list(scenarios.DEFICITS)}  budget: {scenarios.PARAMS.budget}")
    for i, labels in enumerate(scenarios.labels_of(plan)):
        print(f"T{i}: " + "{" + ", ".join(["root"] + sorted(labels)) + "}")
    print(f"tokens used: {plan.tokens_used}")
    print(json.dumps(plan.to_dict(), sort_keys=True, indent=2))


if __name__ == "__main__":
    main()
