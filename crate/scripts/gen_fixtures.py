#!/usr/bin/env python3
"""Regenerate the bundled fixtures under data/.

Everything is deterministic; rerunning produces byte-identical files.
"""

import json
import os
import random

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data")

DIM = 8

WORDS = [
    # colors and tabletop places
    "red", "blue", "green", "yellow", "purple", "orange",
    "block", "bowl", "corner", "top", "bottom", "left", "right",
    # kitchen
    "egg", "pan", "pot", "bread", "knife", "cup", "kettle", "water", "tomato", "coffee", "plate", "oven",
    # cleaning
    "towel", "table", "floor", "sponge", "sink", "window", "cloth", "trash", "bin", "mop", "vacuum",
    # massage
    "shoulder", "back", "neck", "calf", "arm", "feet", "lotion", "gentle", "firm",
    # people and handover items
    "alice", "bob", "carol", "coke", "apple",
]

ACTION_PREFIX = "Considering ambiguity of a goal, "
FEASIBILITY_CUE = "Considering the action set, can I"
REASON_CUE = "This code is uncertain because"
QUESTION_CUE = "What can I ask the user?"

HOUSEHOLD_ACTIONS = [
    "robot.pick_and_place(<pick>, <place>)",
    "robot.cook(<food>, <tool>)",
    "robot.wipe(<surface>, <tool>)",
    "robot.massage(<part>, <strength>)",
]
TABLETOP_ACTIONS = ["robot.pick_and_place(<pick>, <place>)"]


def write(name, text):
    path = os.path.join(ROOT, name)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def dump(obj):
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


def embedding_table():
    rng = random.Random(7)
    lines = [f"{len(WORDS)} {DIM}"]
    for w in WORDS:
        v = [rng.gauss(0.0, 1.0) for _ in range(DIM)]
        norm = sum(x * x for x in v) ** 0.5
        lines.append(w + " " + " ".join(f"{x / norm:.6f}" for x in v))
    return "\n".join(lines) + "\n"


CONTEXTS = [
    ("objects: red block, blue bowl; people: none", "put the red block in the blue bowl",
     "robot.pick_and_place(red block, blue bowl)"),
    ("objects: green block, yellow block; people: none", "move the green block to the top left corner",
     "robot.pick_and_place(green block, top left corner)"),
    ("objects: pan, egg, plate; people: none", "fry the egg", "robot.cook(egg, pan)"),
    ("objects: kettle, cup; people: none", "boil some water", "robot.cook(water, kettle)"),
    ("objects: table, towel; people: none", "wipe down the table", "robot.wipe(table, towel)"),
    ("objects: floor, mop; people: none", "mop the floor", "robot.wipe(floor, mop)"),
    ("objects: lotion; people: carol", "massage my neck firmly", "robot.massage(neck, firm)"),
    ("objects: coke, apple; people: alice, bob", "hand the apple to bob", "robot.give(apple, bob)"),
]


def contexts():
    return [{"scene_snippet": s, "goal_text": g, "skill_text": k} for s, g, k in CONTEXTS]


def entity_list(names):
    return list(names)


SCENES = {
    "kitchen-a": {"robot_type": "cook", "objects": ["pan", "egg", "bread", "knife", "kettle"], "people": []},
    "kitchen-b": {"robot_type": "cook", "objects": ["pot", "tomato", "cup", "coffee", "plate", "oven"], "people": []},
    "living-a": {"robot_type": "clean", "objects": ["table", "towel", "floor", "vacuum", "sponge"], "people": []},
    "living-b": {"robot_type": "clean", "objects": ["window", "cloth", "sink", "trash", "bin", "mop"],
                 "people": []},
    "spa-a": {"robot_type": "massage", "objects": ["lotion", "towel"], "people": ["alice"]},
    "spa-b": {"robot_type": "massage", "objects": ["lotion"], "people": ["bob"]},
}


def scene(scene_id):
    s = SCENES[scene_id]
    return {
        "robot_type": s["robot_type"],
        "objects": entity_list(s["objects"]),
        "people": entity_list(s["people"]),
        "action_set": HOUSEHOLD_ACTIONS,
    }


# (goal, scene_id, skill) for certain rows; (goal, scene_id, (a, b)) for uncertain rows
CERTAIN = {
    "cook": [
        ("fry an egg in the pan", "kitchen-a", "robot.cook(egg, pan)"),
        ("boil water in the kettle", "kitchen-a", "robot.cook(water, kettle)"),
        ("slice the bread with the knife", "kitchen-a", "robot.cook(bread, knife)"),
        ("put the tomato in the pot", "kitchen-b", "robot.pick_and_place(tomato, pot)"),
        ("pour the coffee into the cup", "kitchen-b", "robot.pick_and_place(coffee, cup)"),
        ("bake the bread in the oven", "kitchen-b", "robot.cook(bread, oven)"),
        ("put the egg on the plate", "kitchen-b", "robot.pick_and_place(egg, plate)"),
    ],
    "clean": [
        ("wipe the table with the towel", "living-a", "robot.wipe(table, towel)"),
        ("vacuum the floor", "living-a", "robot.wipe(floor, vacuum)"),
        ("put the sponge in the sink", "living-a", "robot.pick_and_place(sponge, sink)"),
        ("mop the floor near the sink", "living-b", "robot.wipe(floor, mop)"),
        ("clean the window with the cloth", "living-b", "robot.wipe(window, cloth)"),
        ("throw the trash in the bin", "living-b", "robot.pick_and_place(trash, bin)"),
        ("wash the cup in the sink", "living-b", "robot.wipe(cup, sink)"),
    ],
    "massage": [
        ("massage my left shoulder", "spa-a", "robot.massage(shoulder, gentle)"),
        ("rub lotion on my back", "spa-a", "robot.massage(back, lotion)"),
        ("massage my neck gently", "spa-a", "robot.massage(neck, gentle)"),
        ("press my right calf firmly", "spa-b", "robot.massage(calf, firm)"),
        ("massage my lower back firmly", "spa-b", "robot.massage(back, firm)"),
        ("stretch my left arm", "spa-b", "robot.massage(arm, gentle)"),
        ("rub my feet", "spa-b", "robot.massage(feet, gentle)"),
    ],
}

AMBIGUOUS = {
    "cook": [
        ("cook something for me", "kitchen-a", ("robot.cook(egg, pan)", "robot.cook(bread, oven)")),
        ("make me a snack", "kitchen-a", ("robot.cook(bread, knife)", "robot.pick_and_place(tomato, plate)")),
        ("prepare a drink", "kitchen-b", ("robot.cook(water, kettle)", "robot.pick_and_place(coffee, cup)")),
        ("put it in the pot", "kitchen-b", ("robot.pick_and_place(tomato, pot)", "robot.pick_and_place(egg, pot)")),
        ("heat that up", "kitchen-b", ("robot.cook(tomato, oven)", "robot.cook(coffee, kettle)")),
        ("bring me the utensil", "kitchen-a", ("robot.pick_and_place(knife, table)", "robot.pick_and_place(pan, table)")),
        ("make breakfast", "kitchen-a", ("robot.cook(egg, pan)", "robot.cook(bread, oven)")),
    ],
    "clean": [
        ("clean that", "living-a", ("robot.wipe(table, towel)", "robot.wipe(floor, vacuum)")),
        ("tidy up over there", "living-a", ("robot.pick_and_place(sponge, sink)", "robot.wipe(floor, towel)")),
        ("wipe it", "living-b", ("robot.wipe(window, cloth)", "robot.wipe(sink, sponge)")),
        ("put it away", "living-b", ("robot.pick_and_place(trash, bin)", "robot.pick_and_place(cloth, sink)")),
        ("clean the stain", "living-a", ("robot.wipe(table, sponge)", "robot.wipe(floor, mop)")),
        ("wash something", "living-b", ("robot.wipe(cup, sink)", "robot.wipe(window, water)")),
        ("move the thing", "living-b", ("robot.pick_and_place(bin, floor)", "robot.pick_and_place(mop, window)")),
    ],
    "massage": [
        ("massage me there", "spa-a", ("robot.massage(shoulder, gentle)", "robot.massage(back, firm)")),
        ("rub that spot", "spa-a", ("robot.massage(neck, gentle)", "robot.massage(calf, firm)")),
        ("make it feel better", "spa-a", ("robot.massage(back, lotion)", "robot.massage(arm, gentle)")),
        ("massage where it hurts", "spa-b", ("robot.massage(feet, firm)", "robot.massage(shoulder, gentle)")),
        ("press harder on it", "spa-b", ("robot.massage(calf, firm)", "robot.massage(neck, firm)")),
        ("do the usual", "spa-b", ("robot.massage(back, gentle)", "robot.massage(feet, lotion)")),
        ("help my sore muscle", "spa-b", ("robot.massage(arm, firm)", "robot.massage(shoulder, lotion)")),
    ],
}

INFEASIBLE = {
    "cook": [
        ("I want to go for a walk", "kitchen-a", ("robot.pick_and_place(egg, floor)", "robot.cook(bread, pan)")),
        ("massage my shoulders", "kitchen-a", ("robot.cook(egg, pot)", "robot.pick_and_place(knife, table)")),
        ("wash the car", "kitchen-b", ("robot.pick_and_place(cup, sink)", "robot.cook(water, pot)")),
        ("paint the wall", "kitchen-b", ("robot.pick_and_place(plate, table)", "robot.cook(tomato, pan)")),
        ("walk the dog", "kitchen-a", ("robot.pick_and_place(bread, floor)", "robot.cook(egg, kettle)")),
        ("fix the television", "kitchen-b", ("robot.pick_and_place(oven, table)", "robot.cook(coffee, pot)")),
    ],
    "clean": [
        ("brew some espresso", "living-a", ("robot.wipe(cup, towel)", "robot.pick_and_place(coffee, table)")),
        ("cook pasta", "living-a", ("robot.wipe(floor, towel)", "robot.pick_and_place(pot, sink)")),
        ("massage my back", "living-b", ("robot.wipe(window, cloth)", "robot.pick_and_place(lotion, bin)")),
        ("drive me to work", "living-b", ("robot.pick_and_place(trash, floor)", "robot.wipe(sink, mop)")),
        ("play the piano", "living-a", ("robot.wipe(table, sponge)", "robot.pick_and_place(towel, floor)")),
        ("bake a cake", "living-b", ("robot.pick_and_place(bin, window)", "robot.wipe(cup, cloth)")),
    ],
    "massage": [
        ("Make a coffee", "spa-a", ("robot.massage(back, gentle)", "robot.pick_and_place(coffee, cup)")),
        ("wash the dishes", "spa-a", ("robot.massage(arm, firm)", "robot.pick_and_place(plate, sink)")),
        ("vacuum the living room", "spa-b", ("robot.massage(feet, lotion)", "robot.wipe(floor, vacuum)")),
        ("cook dinner", "spa-b", ("robot.massage(neck, firm)", "robot.cook(egg, pan)")),
        ("feed the cat", "spa-a", ("robot.massage(calf, gentle)", "robot.pick_and_place(bread, plate)")),
        ("iron my shirt", "spa-b", ("robot.massage(shoulder, firm)", "robot.wipe(table, towel)")),
    ],
}

ROBOTS = ["cook", "clean", "massage"]


def sagc_rows():
    rows = []
    for robot in ROBOTS:
        for label, table in (("certain", CERTAIN), ("ambiguous", AMBIGUOUS), ("infeasible", INFEASIBLE)):
            for goal, scene_id, _ in table[robot]:
                rows.append({
                    "goal_text": goal,
                    "robot_type": robot,
                    "scene": scene(scene_id),
                    "label": label,
                    "scene_id": scene_id,
                })
    goals = [r["goal_text"] for r in rows]
    assert len(goals) == len(set(goals)), "goal texts must be unique"
    return rows


def ndjson(rows):
    return "".join(json.dumps(r, ensure_ascii=False, separators=(",", ":")) + "\n" for r in rows)


def pick(rows, label, per_robot):
    out = []
    for robot in ROBOTS:
        out += [r for r in rows if r["robot_type"] == robot and r["label"] == label][:per_robot]
    return out


# ---------------------------------------------------------------------------
# rules


def action_rule(goal, responses):
    return {"match": f"{ACTION_PREFIX}{goal}\nrobot:", "responses": list(responses)}


def household_rules():
    questions, reasons, feasibility, actions = [], [], [], []
    for robot in ROBOTS:
        for goal, _, skill in CERTAIN[robot]:
            actions.append(action_rule(goal, [skill]))
        for goal, _, pair in AMBIGUOUS[robot]:
            key = f"can I {goal}?"
            actions.append(action_rule(goal, pair))
            feasibility.append({"match": key, "responses": ["Yes, I can do that with my action set."]})
            reasons.append({"match": [REASON_CUE, key],
                            "responses": ["the goal does not say which object or place to use."]})
            questions.append({"match": [QUESTION_CUE, key],
                              "responses": ["tell me which object you mean."]})
        for goal, _, pair in INFEASIBLE[robot]:
            key = f"can I {goal}?"
            actions.append(action_rule(goal, pair))
            feasibility.append({"match": key,
                                "responses": [f"No, I cannot {goal[0].lower() + goal[1:]} with my action set."]})
            reasons.append({"match": [REASON_CUE, key],
                            "responses": [f"no skill in my action set lets a {robot} robot do that."]})
    return questions, reasons, feasibility, actions


# Simulator batch: explicit scenes so that every goal text is unique.
SIM_CLEAR = [
    dict(template_id="pick_place", bindings={"block": "red block", "bowl": "blue bowl"},
         blocks=["red", "green", "yellow"], bowls=["blue", "purple"],
         plan=["robot.pick_and_place(red block, blue bowl)"]),
    dict(template_id="all_on_corner", bindings={"corner": "top left corner"},
         blocks=["red", "green"], bowls=["blue"],
         plan=["robot.pick_and_place(red block, top left corner)",
               "robot.pick_and_place(green block, top left corner)"]),
    dict(template_id="all_in_bowl", bindings={"bowl": "green bowl"},
         blocks=["yellow", "purple"], bowls=["green", "orange"],
         plan=["robot.pick_and_place(yellow block, green bowl)",
               "robot.pick_and_place(purple block, green bowl)"]),
    dict(template_id="different_corners", bindings={},
         blocks=["red", "blue", "green"], bowls=["yellow"],
         plan=["robot.pick_and_place(red block, top left corner)",
               "robot.pick_and_place(blue block, top right corner)",
               "robot.pick_and_place(green block, bottom left corner)"]),
    dict(template_id="matching_color", bindings={},
         blocks=["red", "blue"], bowls=["red", "blue", "green"],
         plan=["robot.pick_and_place(red block, red bowl)",
               "robot.pick_and_place(blue block, blue bowl)"]),
    dict(template_id="stack_on_corner", bindings={"corner": "bottom right corner"},
         blocks=["orange", "purple", "red"], bowls=["green"],
         plan=["robot.pick_and_place(orange block, bottom right corner)",
               "robot.pick_and_place(purple block, bottom right corner)",
               "robot.pick_and_place(red block, bottom right corner)"]),
]

SIM_AMBIGUOUS = [
    dict(template_id="pick_user_block", bindings={"bowl": "blue bowl"}, hidden_intent={"block": "green block"},
         blocks=["red", "green", "yellow"], bowls=["blue", "purple"],
         question="tell me which block you want.", answer="the green block",
         guesses=["robot.pick_and_place(red block, blue bowl)", "robot.pick_and_place(green block, blue bowl)"],
         plan=["robot.pick_and_place(green block, blue bowl)"]),
    dict(template_id="pick_user_block", bindings={"bowl": "purple bowl"}, hidden_intent={"block": "yellow block"},
         blocks=["red", "green", "yellow"], bowls=["blue", "purple"],
         question="tell me which block you want.", answer="the yellow block",
         guesses=["robot.pick_and_place(red block, purple bowl)", "robot.pick_and_place(yellow block, purple bowl)"],
         plan=["robot.pick_and_place(yellow block, purple bowl)"]),
    dict(template_id="pick_to_user_bowl", bindings={"block": "red block"}, hidden_intent={"bowl": "green bowl"},
         blocks=["red", "yellow"], bowls=["blue", "green"],
         question="tell me which bowl to use.", answer="the green bowl",
         guesses=["robot.pick_and_place(red block, blue bowl)", "robot.pick_and_place(red block, green bowl)"],
         plan=["robot.pick_and_place(red block, green bowl)"]),
    dict(template_id="pick_to_user_bowl", bindings={"block": "yellow block"}, hidden_intent={"bowl": "blue bowl"},
         blocks=["red", "yellow"], bowls=["blue", "green"],
         question="tell me which bowl to use.", answer="the blue bowl",
         guesses=["robot.pick_and_place(yellow block, green bowl)", "robot.pick_and_place(yellow block, blue bowl)"],
         plan=["robot.pick_and_place(yellow block, blue bowl)"]),
    dict(template_id="pick_block_bowl", bindings={}, hidden_intent={"block": "yellow block", "bowl": "blue bowl"},
         blocks=["red", "yellow"], bowls=["blue", "green"],
         question="tell me which block and which bowl you mean.", answer="the yellow block and the blue bowl",
         guesses=["robot.pick_and_place(red block, green bowl)", "robot.pick_and_place(yellow block, blue bowl)"],
         plan=["robot.pick_and_place(yellow block, blue bowl)"]),
    dict(template_id="stack_all", bindings={}, hidden_intent={"corner": "top right corner"},
         blocks=["red", "green"], bowls=["blue"],
         question="tell me where I should stack them.", answer="the top right corner",
         guesses=["robot.pick_and_place(green block, bottom left corner)\n"
                  "robot.pick_and_place(red block, bottom left corner)",
                  "robot.pick_and_place(green block, top right corner)\n"
                  "robot.pick_and_place(red block, top right corner)"],
         plan=["robot.pick_and_place(green block, top right corner)",
               "robot.pick_and_place(red block, top right corner)"]),
]

GOAL_PATTERNS = {
    "pick_place": "pick the {block} and put on the {bowl}",
    "all_on_corner": "place all blocks on the {corner}",
    "all_in_bowl": "place all blocks on the {bowl}",
    "different_corners": "put all blocks on different corners",
    "matching_color": "place blocks on matching color",
    "stack_on_corner": "stack all blocks on the {corner}",
    "pick_user_block": "pick the block that the user wants and place on the {bowl}",
    "pick_to_user_bowl": "pick the {block} and put on the bowl that the user wants",
    "pick_block_bowl": "pick the block and put in the bowl",
    "stack_all": "stack all blocks",
}


def sim_goal(item):
    return GOAL_PATTERNS[item["template_id"]].format(**item["bindings"])


def sim_rules():
    questions, reasons, feasibility, round2, round1 = [], [], [], [], []
    for item in SIM_CLEAR:
        round1.append(action_rule(sim_goal(item), ["\n".join(item["plan"])]))
    for item in SIM_AMBIGUOUS:
        goal = sim_goal(item)
        key = f"can I {goal}?"
        questions.append({"match": [QUESTION_CUE, key], "responses": [item["question"]]})
        reasons.append({"match": [REASON_CUE, key],
                        "responses": ["the command leaves part of the task unspecified."]})
        feasibility.append({"match": key, "responses": ["Yes, I can do that."]})
        round2.append(action_rule(f"{goal}, given that: {item['answer']}", ["\n".join(item["plan"])]))
        round1.append(action_rule(goal, item["guesses"]))
    return questions, reasons, feasibility, round2, round1


def sim_batch():
    batch = []
    items = SIM_CLEAR + SIM_AMBIGUOUS
    for i, item in enumerate(items):
        entry = {"template_id": item["template_id"], "bindings": item["bindings"], "seed": 100 + i, "budget": 1}
        if "hidden_intent" in item:
            entry["hidden_intent"] = item["hidden_intent"]
        entry["blocks"] = item["blocks"]
        entry["bowls"] = item["bowls"]
        batch.append(entry)
    goals = [sim_goal(i) for i in items]
    assert len(goals) == len(set(goals))
    return batch


SAGC_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "Command triage dataset record (one JSON object per line)",
    "type": "object",
    "required": ["goal_text", "robot_type", "scene", "label", "scene_id"],
    "properties": {
        "goal_text": {"type": "string", "minLength": 1},
        "robot_type": {"type": "string", "description": "cook, clean or massage; anything else reads as other"},
        "label": {"enum": ["certain", "ambiguous", "infeasible"]},
        "scene_id": {"type": "string"},
        "scene": {
            "type": "object",
            "required": ["robot_type", "action_set"],
            "properties": {
                "robot_type": {"type": "string"},
                "objects": {"type": "array", "items": {"$ref": "#/$defs/entity"}},
                "people": {"type": "array", "items": {"$ref": "#/$defs/entity"}},
                "action_set": {"type": "array", "items": {"type": "string"}, "minItems": 1},
            },
        },
    },
    "$defs": {
        "entity": {
            "oneOf": [
                {"type": "string"},
                {
                    "type": "object",
                    "required": ["name"],
                    "properties": {
                        "name": {"type": "string"},
                        "attributes": {"type": "object", "additionalProperties": {"type": "string"}},
                    },
                },
            ]
        }
    },
}


def main():
    write("embeddings.txt", embedding_table())
    write("contexts.json", dump(contexts()))

    rows = sagc_rows()
    write("sagc_fixture.ndjson", ndjson(rows))
    write("fixtures/separation.ndjson", ndjson(pick(rows, "certain", 4)[:10]
                                                + pick(rows, "ambiguous", 2)[:5]
                                                + pick(rows, "infeasible", 2)[:5]))
    write("fixtures/cascade.ndjson", ndjson(pick(rows, "certain", 2)
                                             + pick(rows, "ambiguous", 2)
                                             + pick(rows, "infeasible", 2)))
    write("sagc.schema.json", dump(SAGC_SCHEMA))

    hq, hr, hf, ha = household_rules()
    sq, sr, sf, s2, s1 = sim_rules()
    # Later prompts in a cascade contain earlier ones, so the most specific
    # cues must come first: question, reason, feasibility, then actions.
    write("mock_rules.json", dump(hq + sq + hr + sr + hf + sf + s2 + s1 + ha))
    write("sim_batch.json", dump(sim_batch()))

    write("scenes/kitchen.json", dump(scene("kitchen-a")))
    write("scenes/tabletop.json", dump({
        "robot_type": "tabletop",
        "objects": ["red block", "yellow block", "blue bowl", "green bowl"],
        "people": [],
        "action_set": TABLETOP_ACTIONS,
    }))

    write("engine.json", dump({
        "backend": {"kind": "mock", "rules_path": "mock_rules.json", "seed": 0},
        "triage": {"epsilon": 0.1, "h": 4, "k": 3, "estimator": "context_sampling",
                   "max_question_rounds": 1, "seed": 42},
        "paths": {"embedding_table": "embeddings.txt", "context_set": "contexts.json",
                  "dataset": "sagc_fixture.ndjson"},
    }))
    write("engine_http.example.json", dump({
        "backend": {"kind": "http", "base_url": "http://127.0.0.1:8000/v1", "model_name": "local-model",
                    "api_key_env_var": "CMDTRIAGE_API_KEY", "api_style": "chat", "timeout_ms": 30000,
                    "supports_logprobs": True},
        "triage": {"epsilon": 0.5, "h": 5, "k": 3, "estimator": "context_sampling", "seed": 0},
        "paths": {"embedding_table": "embeddings.txt", "context_set": "contexts.json"},
    }))


if __name__ == "__main__":
    main()
