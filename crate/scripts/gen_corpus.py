#!/usr/bin/env python3
"""Generates the synthetic evaluation fixtures in crates/core/fixtures/.

Each task is described by a tiny action program. The program is rendered to
python3 and nodejs handler code (the canned "model responses") and executed
against a model of the device state to derive the semantic test assertions.

Output is deterministic; rerun after editing and commit the result.
"""
import copy
import json
import os
import random
import re

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
OUT = os.path.join(ROOT, "crates", "core", "fixtures")
DEFAULT_STATE = os.path.join(ROOT, "crates", "core", "assets", "home", "default_state.json")

LIGHTS = ["living_room_light", "bedroom_light", "kitchen_light", "hallway_light", "bathroom_light"]
ROOM = {
    "living_room_light": "living room",
    "bedroom_light": "bedroom",
    "kitchen_light": "kitchen",
    "hallway_light": "hallway",
    "bathroom_light": "bathroom",
}


# ---------------------------------------------------------------------------
# Program IR
#
# statements: ("set", dev, attr, value)
#             ("set_input", dev, attr, key, default)
#             ("set_many", [devs], attr, value)
#             ("if", cond, [then], [else])
# conditions: ("input_eq", key, value) | ("cmd", word)
#             ("attr_eq", dev, attr, value) | ("attr_lt", dev, attr, n) | ("attr_gt", dev, attr, n)
#             ("clock_ge", n) | ("not", c) | ("and", a, b) | ("or", a, b)
# ---------------------------------------------------------------------------


def uses_input(stmts):
    def c_uses(c):
        if c[0] in ("input_eq",):
            return "json"
        if c[0] == "cmd":
            return "text"
        if c[0] == "not":
            return c_uses(c[1])
        if c[0] in ("and", "or"):
            return c_uses(c[1]) or c_uses(c[2])
        return None

    kinds = set()
    for s in stmts:
        if s[0] == "set_input":
            kinds.add("json")
        elif s[0] == "if":
            k = c_uses(s[1])
            if k:
                kinds.add(k)
            kinds |= uses_input(s[2]) | uses_input(s[3])
    return kinds


def py_value(v):
    if v is True:
        return "True"
    if v is False:
        return "False"
    if isinstance(v, str):
        return json.dumps(v)
    return repr(v)


def js_value(v):
    if v is True:
        return "true"
    if v is False:
        return "false"
    if isinstance(v, str):
        return "'" + v.replace("'", "\\'") + "'"
    return repr(v)


def py_cond(c):
    k = c[0]
    if k == "input_eq":
        return "data.get(%s) == %s" % (json.dumps(c[1]), py_value(c[2]))
    if k == "cmd":
        return "command == %s" % json.dumps(c[1])
    if k == "attr_eq":
        if c[3] is True:
            return "home.get(%s, %s)" % (json.dumps(c[1]), json.dumps(c[2]))
        if c[3] is False:
            return "not home.get(%s, %s)" % (json.dumps(c[1]), json.dumps(c[2]))
        return "home.get(%s, %s) == %s" % (json.dumps(c[1]), json.dumps(c[2]), py_value(c[3]))
    if k == "attr_lt":
        return "home.get(%s, %s) < %s" % (json.dumps(c[1]), json.dumps(c[2]), py_value(c[3]))
    if k == "attr_gt":
        return "home.get(%s, %s) > %s" % (json.dumps(c[1]), json.dumps(c[2]), py_value(c[3]))
    if k == "clock_ge":
        return "home.now() >= %d" % c[1]
    if k == "not":
        return "not (%s)" % py_cond(c[1])
    if k in ("and", "or"):
        return "(%s) %s (%s)" % (py_cond(c[1]), k, py_cond(c[2]))
    raise ValueError(k)


def js_cond(c):
    k = c[0]
    if k == "input_eq":
        return "data.%s === %s" % (c[1], js_value(c[2]))
    if k == "cmd":
        return "command === %s" % js_value(c[1])
    if k == "attr_eq":
        if c[3] is True:
            return "(await home.get(%s, %s))" % (js_value(c[1]), js_value(c[2]))
        if c[3] is False:
            return "!(await home.get(%s, %s))" % (js_value(c[1]), js_value(c[2]))
        return "(await home.get(%s, %s)) === %s" % (js_value(c[1]), js_value(c[2]), js_value(c[3]))
    if k == "attr_lt":
        return "(await home.get(%s, %s)) < %s" % (js_value(c[1]), js_value(c[2]), js_value(c[3]))
    if k == "attr_gt":
        return "(await home.get(%s, %s)) > %s" % (js_value(c[1]), js_value(c[2]), js_value(c[3]))
    if k == "clock_ge":
        return "(await home.now()) >= %d" % c[1]
    if k == "not":
        return "!(%s)" % js_cond(c[1])
    if k in ("and", "or"):
        op = "&&" if k == "and" else "||"
        return "(%s) %s (%s)" % (js_cond(c[1]), op, js_cond(c[2]))
    raise ValueError(k)


def py_stmts(stmts, indent):
    pad = "    " * indent
    out = []
    for s in stmts:
        if s[0] == "set":
            out.append("%shome.set(%s, %s, %s)" % (pad, json.dumps(s[1]), json.dumps(s[2]), py_value(s[3])))
        elif s[0] == "set_input":
            out.append("%shome.set(%s, %s, data.get(%s, %s))" % (pad, json.dumps(s[1]), json.dumps(s[2]), json.dumps(s[3]), py_value(s[4])))
        elif s[0] == "set_many":
            out.append("%sfor device in %s:" % (pad, json.dumps(s[1])))
            out.append("%s    home.set(device, %s, %s)" % (pad, json.dumps(s[2]), py_value(s[3])))
        elif s[0] == "if":
            out.append("%sif %s:" % (pad, py_cond(s[1])))
            out.extend(py_stmts(s[2], indent + 1) or [pad + "    pass"])
            if s[3]:
                if len(s[3]) == 1 and s[3][0][0] == "if":
                    nested = py_stmts(s[3], indent)
                    out.append(pad + "el" + nested[0].lstrip())
                    out.extend(nested[1:])
                else:
                    out.append("%selse:" % pad)
                    out.extend(py_stmts(s[3], indent + 1))
        else:
            raise ValueError(s[0])
    return out


def js_stmts(stmts, indent):
    pad = "  " * indent
    out = []
    for s in stmts:
        if s[0] == "set":
            out.append("%sawait home.set(%s, %s, %s);" % (pad, js_value(s[1]), js_value(s[2]), js_value(s[3])))
        elif s[0] == "set_input":
            out.append("%sawait home.set(%s, %s, data.%s ?? %s);" % (pad, js_value(s[1]), js_value(s[2]), s[3], js_value(s[4])))
        elif s[0] == "set_many":
            devs = ", ".join(js_value(d) for d in s[1])
            out.append("%sfor (const device of [%s]) {" % (pad, devs))
            out.append("%s  await home.set(device, %s, %s);" % (pad, js_value(s[2]), js_value(s[3])))
            out.append(pad + "}")
        elif s[0] == "if":
            out.append("%sif (%s) {" % (pad, js_cond(s[1])))
            out.extend(js_stmts(s[2], indent + 1))
            if s[3]:
                if len(s[3]) == 1 and s[3][0][0] == "if":
                    nested = js_stmts(s[3], indent)
                    out.append(pad + "} else " + nested[0].lstrip())
                    out.extend(nested[1:])
                    continue
                out.append(pad + "} else {")
                out.extend(js_stmts(s[3], indent + 1))
            out.append(pad + "}")
        else:
            raise ValueError(s[0])
    return out


def render_py(program, doc, prelude=None, extra_imports=()):
    kinds = uses_input(program)
    lines = []
    if "json" in kinds:
        lines.append("import json")
    lines.extend(extra_imports)
    lines.append("import home")
    lines.append("")
    lines.append("")
    lines.append("def fn(input):")
    lines.append('    """%s"""' % doc)
    if prelude:
        lines.extend("    " + p for p in prelude)
    if "json" in kinds:
        lines.append("    data = json.loads(input) if input and input.strip() else {}")
    if "text" in kinds:
        lines.append("    command = (input or \"\").strip().lower()")
    lines.extend(py_stmts(program, 1))
    lines.append('    return "ok"')
    return "\n".join(lines) + "\n"


def render_js(program, doc, prelude=None, extra_requires=()):
    kinds = uses_input(program)
    lines = []
    lines.extend(extra_requires)
    lines.append("const home = require('./home');")
    lines.append("")
    lines.append("// %s" % doc)
    lines.append("async function fn(input) {")
    if prelude:
        lines.extend("  " + p for p in prelude)
    if "json" in kinds:
        lines.append("  const data = input && input.trim() ? JSON.parse(input) : {};")
    if "text" in kinds:
        lines.append("  const command = (input || '').trim().toLowerCase();")
    lines.extend(js_stmts(program, 1))
    lines.append("  return 'ok';")
    lines.append("}")
    lines.append("")
    lines.append("module.exports = { fn };")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Device model and interpreter
# ---------------------------------------------------------------------------

with open(DEFAULT_STATE, encoding="utf-8") as f:
    DEFAULT = json.load(f)


class Model:
    def __init__(self):
        self.state = copy.deepcopy(DEFAULT)
        self.log = []  # (device, attribute, value, source)

    def set(self, dev, attr, value, source):
        self.state["devices"][dev]["attributes"][attr] = value
        self.log.append((dev, attr, value, source))

    def get(self, dev, attr):
        return self.state["devices"][dev]["attributes"][attr]


def eval_cond(c, m, data, command):
    k = c[0]
    if k == "input_eq":
        return data.get(c[1]) == c[2]
    if k == "cmd":
        return command == c[1]
    if k == "attr_eq":
        return m.get(c[1], c[2]) == c[3]
    if k == "attr_lt":
        return m.get(c[1], c[2]) < c[3]
    if k == "attr_gt":
        return m.get(c[1], c[2]) > c[3]
    if k == "clock_ge":
        return m.state["clock"] >= c[1]
    if k == "not":
        return not eval_cond(c[1], m, data, command)
    if k == "and":
        return eval_cond(c[1], m, data, command) and eval_cond(c[2], m, data, command)
    if k == "or":
        return eval_cond(c[1], m, data, command) or eval_cond(c[2], m, data, command)
    raise ValueError(k)


def run_program(stmts, m, data, command):
    for s in stmts:
        if s[0] == "set":
            m.set(s[1], s[2], s[3], "fn")
        elif s[0] == "set_input":
            m.set(s[1], s[2], data.get(s[3], s[4]), "fn")
        elif s[0] == "set_many":
            for d in s[1]:
                m.set(d, s[2], s[3], "fn")
        elif s[0] == "if":
            branch = s[2] if eval_cond(s[1], m, data, command) else s[3]
            run_program(branch, m, data, command)


def written_devices(stmts):
    out = []
    for s in stmts:
        if s[0] in ("set", "set_input"):
            out.append(s[1])
        elif s[0] == "set_many":
            out.extend(s[1])
        elif s[0] == "if":
            out.extend(written_devices(s[2]) + written_devices(s[3]))
    seen = []
    for d in out:
        if d not in seen:
            seen.append(d)
    return seen


def referenced_devices(program, stimuli):
    refs = set(written_devices(program))

    def walk(stmts):
        for s in stmts:
            if s[0] == "if":
                cond_refs(s[1])
                walk(s[2])
                walk(s[3])

    def cond_refs(c):
        if c[0] in ("attr_eq", "attr_lt", "attr_gt"):
            refs.add(c[1])
        elif c[0] == "not":
            cond_refs(c[1])
        elif c[0] in ("and", "or"):
            cond_refs(c[1])
            cond_refs(c[2])

    walk(program)
    for st in stimuli:
        if "device" in st:
            refs.add(st["device"])
    return refs


def build_case(name, program, setup, payload="", at=1, rng=None):
    """setup: list of stimuli applied before the invocation (all at tick 0)."""
    m = Model()
    stimuli = []
    for st in setup:
        st = dict(st)
        st.setdefault("at", 0)
        stimuli.append(st)
        m.state["clock"] = max(m.state["clock"], st["at"])
        if st["kind"] == "set_attribute":
            m.set(st["device"], st["attribute"], st["value"], "stimulus")
        elif st["kind"] == "fire_sensor":
            m.set(st["device"], "motion", True, "stimulus")
    at = max(at, max([s["at"] for s in stimuli], default=0))
    stimuli.append({"at": at, "kind": "invoke_function", "payload": payload})
    m.state["clock"] = at
    data = {}
    command = (payload or "").strip().lower()
    if payload.strip().startswith("{"):
        data = json.loads(payload)
    before_fn = len(m.log)
    run_program(program, m, data, command)
    fn_writes = m.log[before_fn:]

    assertions = []
    final = {}
    for dev, attr, value, _ in fn_writes:
        final[(dev, attr)] = value
    for (dev, attr), value in final.items():
        assertions.append({"type": "attribute_equals", "device": dev, "attribute": attr, "value": value})

    # Devices the program may write but did not in this case must be untouched
    # by the function.
    stimulus_devs = {s.get("device") for s in setup}
    for dev in written_devices(program):
        if all(w[0] != dev for w in fn_writes) and dev not in stimulus_devs:
            assertions.append({"type": "no_change", "device": dev})

    # Ordering: a stimulus that caused the function's reaction comes first.
    fired = [s for s in setup if s["kind"] == "fire_sensor"]
    if fired and fn_writes:
        dev, attr, value, _ = fn_writes[0]
        assertions.append({
            "type": "event_order",
            "first": {"device": fired[0]["device"], "attribute": "motion", "value": True},
            "then": {"device": dev, "attribute": attr, "value": value},
        })
    distinct = []
    for w in fn_writes:
        if all(d[0] != w[0] for d in distinct):
            distinct.append(w)
    if len(distinct) >= 2:
        a, b = distinct[0], distinct[1]
        pre = [e for e in m.log[:before_fn]]
        clash = any((e[0], e[1], e[2]) in ((a[0], a[1], a[2]), (b[0], b[1], b[2])) for e in pre)
        first_a = next(i for i, e in enumerate(fn_writes) if (e[0], e[1], e[2]) == (a[0], a[1], a[2]))
        first_b = next(i for i, e in enumerate(fn_writes) if (e[0], e[1], e[2]) == (b[0], b[1], b[2]))
        if not clash and first_a < first_b:
            assertions.append({
                "type": "event_order",
                "first": {"device": a[0], "attribute": a[1], "value": a[2]},
                "then": {"device": b[0], "attribute": b[1], "value": b[2]},
            })

    untouched = sorted(set(DEFAULT["devices"]) - referenced_devices(program, setup))
    if untouched:
        pick = (rng or random.Random(0)).choice(untouched)
        assertions.append({"type": "no_change", "device": pick})
    assert assertions, name
    return {"name": name, "scenario": {"stimuli": stimuli}, "assertions": assertions}


# ---------------------------------------------------------------------------
# Responses
# ---------------------------------------------------------------------------

PY_TAGS = ["python", "python", "py", "python3"]
JS_TAGS = ["javascript", "javascript", "js", "node"]


def wrap(code, runtime, style):
    tag = (PY_TAGS if runtime == "python3" else JS_TAGS)[style % 4]
    if style % 5 == 3:
        return "Plan:\n\n```\n1. read the request\n2. update the devices\n```\n\n```%s\n%s```\n" % (tag, code)
    if style % 5 == 4:
        return "```%s\n%s```" % (tag, code)
    intro = [
        "Here is the function:",
        "Sure. The handler below does what you asked.",
        "This implementation uses the device API client.",
    ][style % 3]
    return "%s\n\n```%s\n%s```\n\nIt returns \"ok\" when done.\n" % (intro, tag, code)


# ---------------------------------------------------------------------------
# Task families
# ---------------------------------------------------------------------------

def on(dev):
    return ("set", dev, "power", "on")


def off(dev):
    return ("set", dev, "power", "off")


def sa(dev, attr, value, at=0):
    return {"kind": "set_attribute", "device": dev, "attribute": attr, "value": value, "at": at}


def easy_tasks():
    tasks = []
    zh = {
        "kitchen_light": "打开厨房的灯。",
        "bedroom_light": "请把卧室的灯打开。",
        "bathroom_light": "浴室的灯打开一下。",
    }
    for dev in LIGHTS:
        text = zh.get(dev, "Turn on the %s light." % ROOM[dev])
        tasks.append((text, [on(dev)], [[], [sa(dev, "brightness", 40)]], ["", ""]))
    for dev, b in zip(LIGHTS, [60, 25, 80, 45, 70]):
        text = "Set the %s light to %d%% brightness." % (ROOM[dev], b)
        tasks.append((text, [on(dev), ("set", dev, "brightness", b)], [[], [sa(dev, "power", "on"), sa(dev, "brightness", 100)]], ["", ""]))
    for t in [22, 19, 24]:
        tasks.append(("Set the thermostat to %d degrees." % t, [("set", "thermostat", "target_temp", t)], [[], [sa("thermostat", "target_temp", 17)]], ["", ""]))
    tasks.append(("Open the living room blinds all the way.", [("set", "living_room_blinds", "position", 100)], [[], [sa("living_room_blinds", "position", 30)]], ["", ""]))
    tasks.append(("Close the bedroom blinds.", [("set", "bedroom_blinds", "position", 0)], [[sa("bedroom_blinds", "position", 100)], [sa("bedroom_blinds", "position", 55)]], ["", ""]))
    tasks.append(("Lock the front door.", [("set", "front_door", "locked", True)], [[sa("front_door", "locked", False)], []], ["", ""]))
    tasks.append(("Unlock the front door.", [("set", "front_door", "locked", False)], [[], [sa("front_door", "locked", False)]], ["", ""]))
    tasks.append(("Set the speaker volume to 35.", [("set", "speaker", "volume", 35)], [[], [sa("speaker", "power", "on")]], ["", ""]))
    tasks.append(("Turn the speaker off.", [off("speaker")], [[sa("speaker", "power", "on")], []], ["", ""]))
    for dev in ["living_room_light", "kitchen_light", "hallway_light"]:
        text = "Switch off the %s light." % ROOM[dev]
        tasks.append((text, [off(dev)], [[sa(dev, "power", "on")], [sa(dev, "power", "on"), sa(dev, "brightness", 90)]], ["", ""]))
    tasks.append(("Put the thermostat into heating mode.", [("set", "thermostat", "mode", "heat")], [[], [sa("thermostat", "mode", "cool")]], ["", ""]))
    tasks.append(("Open the bedroom blinds halfway.", [("set", "bedroom_blinds", "position", 50)], [[], [sa("bedroom_blinds", "position", 100)]], ["", ""]))
    tasks.append(("Play jazz on the speaker.", [on("speaker"), ("set", "speaker", "playing", "jazz")], [[], [sa("speaker", "playing", "news")]], ["", ""]))
    assert len(tasks) == 25, len(tasks)
    return [dict(complexity="easy", subtasks=1, text=t, program=p, cases=list(zip(s, pl))) for t, p, s, pl in tasks]


SCENE_POOL = [
    ("dim the living room light to 20%", [on("living_room_light"), ("set", "living_room_light", "brightness", 20)]),
    ("close the living room blinds", [("set", "living_room_blinds", "position", 0)]),
    ("turn on the speaker at volume 30", [on("speaker"), ("set", "speaker", "volume", 30)]),
    ("open the bedroom blinds", [("set", "bedroom_blinds", "position", 100)]),
    ("turn on the bedroom light at 80%", [on("bedroom_light"), ("set", "bedroom_light", "brightness", 80)]),
    ("set the thermostat to 21 degrees", [("set", "thermostat", "target_temp", 21)]),
    ("lock the front door", [("set", "front_door", "locked", True)]),
    ("turn off the kitchen light", [off("kitchen_light")]),
    ("switch the thermostat to heat mode", [("set", "thermostat", "mode", "heat")]),
    ("turn on the hallway light", [on("hallway_light")]),
    ("play the news on the speaker", [on("speaker"), ("set", "speaker", "playing", "news")]),
    ("open the living room blinds to 60%", [("set", "living_room_blinds", "position", 60)]),
    ("turn off the bathroom light", [off("bathroom_light")]),
    ("set the thermostat to 18 degrees", [("set", "thermostat", "target_temp", 18)]),
]

SCENE_NAMES = ["Movie night", "Good morning", "Bedtime", "Dinner", "Reading time", "Wake up", "Relax", "Evening"]


def devices_of(stmts):
    return set(written_devices(stmts))


def medium_tasks(rng):
    tasks = []
    while len(tasks) < 20:
        picks = rng.sample(SCENE_POOL, 3)
        devs = [devices_of(p[1]) for p in picks]
        if devs[0] & devs[1] or devs[0] & devs[2] or devs[1] & devs[2]:
            continue
        name = SCENE_NAMES[len(tasks) % len(SCENE_NAMES)]
        text = "%s: %s, %s, and %s." % (name, picks[0][0], picks[1][0], picks[2][0])
        text = text[0].upper() + text[1:]
        program = [s for p in picks for s in p[1]]
        key = tuple(p[0] for p in picks)
        if any(t["key"] == key for t in tasks):
            continue
        # Second case: start from a state where the targets already differ.
        setup2 = [sa("speaker", "volume", 70), sa("living_room_blinds", "position", 90)]
        tasks.append(dict(key=key, complexity="medium", subtasks=3, text=text, program=program, cases=[([], ""), (setup2, "")]))
    for dev in ["kitchen_light", "living_room_light", "bedroom_light"]:
        text = ("The request body is JSON such as {\"level\": 40}. Turn on the %s light, set its brightness to "
                "\"level\" (50 if missing), and set the speaker volume to \"volume\" (20 if missing)." % ROOM[dev])
        program = [on(dev), ("set_input", dev, "brightness", "level", 50), ("set_input", "speaker", "volume", "volume", 20)]
        cases = [([], '{"level": 40, "volume": 15}'), ([], "{}"), ([sa(dev, "brightness", 5)], '{"level": 90}')]
        tasks.append(dict(complexity="medium", subtasks=3, text=text, program=program, cases=cases))
    text = ("The request body is JSON like {\"temp\": 22}. Set the thermostat target to \"temp\" (21 if missing), "
            "switch the thermostat to heat mode, and close the bedroom blinds.")
    program = [("set_input", "thermostat", "target_temp", "temp", 21), ("set", "thermostat", "mode", "heat"), ("set", "bedroom_blinds", "position", 0)]
    tasks.append(dict(complexity="medium", subtasks=3, text=text, program=program,
                      cases=[([], '{"temp": 23}'), ([sa("bedroom_blinds", "position", 80)], "")]))
    text = ("The body names a position from 0 to 100 as JSON {\"position\": n}. Move both the living room blinds and "
            "the bedroom blinds to that position (100 if missing) and turn on the living room light.")
    program = [("set_input", "living_room_blinds", "position", "position", 100), ("set_input", "bedroom_blinds", "position", "position", 100), on("living_room_light")]
    tasks.append(dict(complexity="medium", subtasks=3, text=text, program=program,
                      cases=[([], '{"position": 30}'), ([], "")]))
    for t in tasks:
        t.pop("key", None)
    assert len(tasks) == 25, len(tasks)
    return tasks


# Conditional subtasks: (phrase, program, setup making the condition true,
# setup making it false, invocation tick for true, for false)
COND_POOL = [
    ("if the hallway motion sensor reports motion, turn on the hallway light",
     [("if", ("attr_eq", "hallway_motion", "motion", True), [on("hallway_light")], [])],
     [{"kind": "fire_sensor", "device": "hallway_motion"}], [], 1, 1),
    ("if the current temperature is below 18 degrees, switch the thermostat to heat mode",
     [("if", ("attr_lt", "thermostat", "current_temp", 18), [("set", "thermostat", "mode", "heat")], [])],
     [sa("thermostat", "current_temp", 16.5)], [sa("thermostat", "current_temp", 21)], 1, 1),
    ("if the front door is unlocked, lock it",
     [("if", ("attr_eq", "front_door", "locked", False), [("set", "front_door", "locked", True)], [])],
     [sa("front_door", "locked", False)], [], 1, 1),
    ("if it is evening (clock tick 1080 or later) set the living room light to 30%, otherwise to 100%",
     [on("living_room_light"), ("if", ("clock_ge", 1080), [("set", "living_room_light", "brightness", 30)], [("set", "living_room_light", "brightness", 100)])],
     [], [], 1200, 600),
    ("if the speaker is on, lower its volume to 10",
     [("if", ("attr_eq", "speaker", "power", "on"), [("set", "speaker", "volume", 10)], [])],
     [sa("speaker", "power", "on")], [], 1, 1),
    ("if the current temperature is above 26 degrees, switch the thermostat to cool mode and close the bedroom blinds",
     [("if", ("attr_gt", "thermostat", "current_temp", 26), [("set", "thermostat", "mode", "cool"), ("set", "bedroom_blinds", "position", 0)], [])],
     [sa("thermostat", "current_temp", 29), sa("bedroom_blinds", "position", 70)], [sa("bedroom_blinds", "position", 70)], 1, 1),
    ("if the kitchen light is on, turn it off",
     [("if", ("attr_eq", "kitchen_light", "power", "on"), [off("kitchen_light")], [])],
     [sa("kitchen_light", "power", "on")], [], 1, 1),
    ("if the living room blinds are closed, open them to 50%",
     [("if", ("attr_eq", "living_room_blinds", "position", 0), [("set", "living_room_blinds", "position", 50)], [])],
     [], [sa("living_room_blinds", "position", 80)], 1, 1),
]


def advanced_tasks(rng):
    tasks = []
    seen = set()
    while len(tasks) < 22:
        picks = rng.sample(range(len(COND_POOL)), 3)
        key = tuple(sorted(picks))
        if key in seen:
            continue
        parts = [COND_POOL[i] for i in picks]
        devs = [devices_of(p[1]) for p in parts]
        cond_devs = [referenced_devices(p[1], p[2] + p[3]) for p in parts]
        if any(cond_devs[a] & cond_devs[b] for a in range(3) for b in range(a + 1, 3)):
            continue
        seen.add(key)
        text = "When called, do three checks: %s; %s; and %s." % (parts[0][0], parts[1][0], parts[2][0])
        program = [s for p in parts for s in p[1]]
        all_true = [s for p in parts for s in p[2]]
        all_false = [s for p in parts for s in p[3]]
        mixed = parts[0][2] + parts[1][3] + parts[2][2]
        at_true = max(p[4] for p in parts)
        at_false = max(p[5] for p in parts)
        at_mixed = max(parts[0][4], parts[1][5], parts[2][4])
        cases = [(all_true, "", at_true), (all_false, "", at_false), (mixed, "", at_mixed)]
        tasks.append(dict(complexity="advanced", subtasks=3, text=text, program=program, cases=cases,
                          doc="Run the conditional device checks"))
    text = ("The body is a command word. On \"arrive\": unlock the front door, turn on the hallway light, and set the "
            "thermostat to 21. On \"leave\": lock the front door, turn off the hallway light, and set the thermostat "
            "to 16. Ignore anything else.")
    program = [("if", ("cmd", "arrive"), [("set", "front_door", "locked", False), on("hallway_light"), ("set", "thermostat", "target_temp", 21)],
                [("if", ("cmd", "leave"), [("set", "front_door", "locked", True), off("hallway_light"), ("set", "thermostat", "target_temp", 16)], [])])]
    tasks.append(dict(complexity="advanced", subtasks=3, text=text, program=program,
                      cases=[([], "arrive", 1), ([sa("front_door", "locked", False), sa("hallway_light", "power", "on")], "leave", 1), ([], "dance", 1)]))
    text = ("Motion lighting: when the hallway motion sensor shows motion, turn on the hallway light; at night "
            "(clock tick 1320 or later) use 20% brightness, otherwise 90%; when there is no motion, turn the hallway light off.")
    program = [("if", ("attr_eq", "hallway_motion", "motion", True),
                [on("hallway_light"), ("if", ("clock_ge", 1320), [("set", "hallway_light", "brightness", 20)], [("set", "hallway_light", "brightness", 90)])],
                [off("hallway_light")])]
    tasks.append(dict(complexity="advanced", subtasks=3, text=text, program=program,
                      cases=[([{"kind": "fire_sensor", "device": "hallway_motion"}], "", 1400),
                             ([{"kind": "fire_sensor", "device": "hallway_motion"}], "", 700),
                             ([sa("hallway_light", "power", "on")], "", 10)]))
    text = ("Climate control from JSON {\"target\": n}: set the thermostat target to n; if the current temperature "
            "is below the target switch to heat mode, otherwise to cool mode; and close the living room blinds when cooling.")
    # Rendered by hand below: compares against the request value.
    tasks.append(dict(complexity="advanced", subtasks=3, text=text, program=None, special="climate",
                      cases=[([], '{"target": 23}', 1), ([sa("thermostat", "current_temp", 27), sa("living_room_blinds", "position", 100)], '{"target": 22}', 1)]))
    assert len(tasks) == 25, len(tasks)
    return tasks


MODE_SCENES = {
    "away": [("set_many", LIGHTS, "power", "off"), ("set", "front_door", "locked", True), ("set", "thermostat", "target_temp", 16), off("speaker")],
    "home": [on("living_room_light"), ("set", "living_room_light", "brightness", 70), ("set", "thermostat", "target_temp", 21), ("set", "front_door", "locked", False)],
    "night": [("set_many", ["living_room_light", "kitchen_light", "bathroom_light"], "power", "off"), ("set", "front_door", "locked", True),
              ("set", "bedroom_blinds", "position", 0), ("set", "thermostat", "target_temp", 18)],
    "party": [("set_many", ["living_room_light", "kitchen_light"], "power", "on"), on("speaker"), ("set", "speaker", "volume", 60),
              ("set", "speaker", "playing", "party mix")],
    "morning": [("set", "bedroom_blinds", "position", 100), ("set", "living_room_blinds", "position", 100), on("kitchen_light"),
                ("set", "thermostat", "target_temp", 21)],
    "cinema": [("set", "living_room_blinds", "position", 0), on("living_room_light"), ("set", "living_room_light", "brightness", 10),
               on("speaker"), ("set", "speaker", "volume", 40)],
}

MODE_TEXT = {
    "away": "\"away\" turns off every light, locks the front door, sets the thermostat to 16 and turns the speaker off",
    "home": "\"home\" turns on the living room light at 70%, sets the thermostat to 21 and unlocks the front door",
    "night": "\"night\" turns off the living room, kitchen and bathroom lights, locks the door, closes the bedroom blinds and sets the thermostat to 18",
    "party": "\"party\" turns on the living room and kitchen lights and plays \"party mix\" on the speaker at volume 60",
    "morning": "\"morning\" opens both blinds fully, turns on the kitchen light and sets the thermostat to 21",
    "cinema": "\"cinema\" closes the living room blinds, sets the living room light to 10% and turns the speaker on at volume 40",
}

EXTRA_RULES = [
    ("Whatever the mode, if the hallway motion sensor shows motion also turn on the hallway light.",
     ("if", ("attr_eq", "hallway_motion", "motion", True), [on("hallway_light")], []),
     [{"kind": "fire_sensor", "device": "hallway_motion"}]),
    ("Whatever the mode, if the current temperature is below 17 degrees also set the thermostat to heat mode.",
     ("if", ("attr_lt", "thermostat", "current_temp", 17), [("set", "thermostat", "mode", "heat")], []),
     [sa("thermostat", "current_temp", 15)]),
    ("Whatever the mode, after clock tick 1200 also close the living room blinds.",
     ("if", ("clock_ge", 1200), [("set", "living_room_blinds", "position", 0)], []),
     []),
]


def complex_tasks(rng):
    tasks = []
    modes = sorted(MODE_SCENES)
    seen = set()
    while len(tasks) < 25:
        picks = tuple(rng.sample(modes, 3))
        extra = rng.randrange(len(EXTRA_RULES))
        if (picks, extra) in seen:
            continue
        seen.add((picks, extra))
        rule_text, rule, rule_setup = EXTRA_RULES[extra]
        text = ("Build one home routine controlled by the request body, which is JSON {\"mode\": ...}. Mode %s; mode %s; "
                "mode %s. Any other mode changes nothing. %s" % (MODE_TEXT[picks[0]], MODE_TEXT[picks[1]], MODE_TEXT[picks[2]], rule_text))
        chain = []
        for mode in reversed(picks):
            chain = [("if", ("input_eq", "mode", mode), MODE_SCENES[mode], chain)]
        program = chain + [rule]
        at_rule = 1300 if extra == 2 else 1
        cases = [
            (rule_setup, json.dumps({"mode": picks[0]}), at_rule),
            ([sa("speaker", "power", "on"), sa("front_door", "locked", False)], json.dumps({"mode": picks[1]}), 5),
            ([sa("living_room_light", "power", "on")], json.dumps({"mode": picks[2]}), 1),
        ]
        if len(tasks) % 2 == 0:
            cases.append(([], json.dumps({"mode": "vacation"}), 1))
        tasks.append(dict(complexity="complex", subtasks=1, text=text, program=program, cases=cases,
                          doc="Apply the scene for the requested mode"))
    return tasks


CLIMATE_PY = '''import json
import home


def fn(input):
    """Set the target temperature and pick heating or cooling."""
    data = json.loads(input) if input and input.strip() else {}
    target = data.get("target", 21)
    home.set("thermostat", "target_temp", target)
    if home.get("thermostat", "current_temp") < target:
        home.set("thermostat", "mode", "heat")
    else:
        home.set("thermostat", "mode", "cool")
        home.set("living_room_blinds", "position", 0)
    return "ok"
'''

CLIMATE_JS = '''const home = require('./home');

// Set the target temperature and pick heating or cooling.
async function fn(input) {
  const data = input && input.trim() ? JSON.parse(input) : {};
  const target = data.target ?? 21;
  await home.set('thermostat', 'target_temp', target);
  if ((await home.get('thermostat', 'current_temp')) < target) {
    await home.set('thermostat', 'mode', 'heat');
  } else {
    await home.set('thermostat', 'mode', 'cool');
    await home.set('living_room_blinds', 'position', 0);
  }
  return 'ok';
}

module.exports = { fn };
'''

CLIMATE_PROGRAM = None  # assertions for the climate task are derived below


def climate_cases(cases, rng):
    out = []
    for i, (setup, payload, at) in enumerate(cases):
        target = json.loads(payload).get("target", 21)
        current = 19.5
        for s in setup:
            if s.get("attribute") == "current_temp":
                current = s["value"]
        if current < target:
            program = [("set", "thermostat", "target_temp", target), ("set", "thermostat", "mode", "heat")]
        else:
            program = [("set", "thermostat", "target_temp", target), ("set", "thermostat", "mode", "cool"), ("set", "living_room_blinds", "position", 0)]
        out.append(build_case("case-%d" % (i + 1), program, setup, payload, at, rng))
    return out


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

def task_code(task, runtime):
    if task.get("special") == "climate":
        return CLIMATE_PY if runtime == "python3" else CLIMATE_JS
    doc = task.get("doc") or re.split(r"[.:;{(]", task["text"])[0].strip()
    if runtime == "python3":
        return render_py(task["program"], doc)
    return render_js(task["program"], doc)


def build_suite(task, rng):
    if task.get("special") == "climate":
        return climate_cases(task["cases"], rng)
    suite = []
    for i, case in enumerate(task["cases"]):
        setup, payload = case[0], case[1]
        at = case[2] if len(case) > 2 else 1
        suite.append(build_case("case-%d" % (i + 1), task["program"], setup, payload, at, rng))
    return suite


def spec(task_id, task, suite):
    return {
        "task_id": task_id,
        "complexity": task["complexity"],
        "subtask_count": task["subtasks"],
        "description_text": task["text"],
        "runtime": "python3",
        "semantic_suite": suite,
    }


def write(name, obj):
    path = os.path.join(OUT, name)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, ensure_ascii=False, indent=1, sort_keys=False)
        f.write("\n")


def main():
    os.makedirs(OUT, exist_ok=True)
    rng = random.Random(20240611)
    groups = [easy_tasks(), medium_tasks(rng), advanced_tasks(rng), complex_tasks(rng)]
    tasks, responses = [], {"python3": {}, "nodejs": {}}
    style = 0
    for group in groups:
        for n, task in enumerate(group, 1):
            task_id = "%s-%02d" % (task["complexity"], n)
            tasks.append(spec(task_id, task, build_suite(task, rng)))
            for runtime in responses:
                responses[runtime][task_id] = [wrap(task_code(task, runtime), runtime, style)]
                style += 1
    write("corpus.json", {"tasks": tasks})
    for runtime, table in responses.items():
        write("responses-%s.json" % runtime, table)
    defects(groups[0], rng)
    repeats(groups[2], rng)


# ---------------------------------------------------------------------------
# Seeded defects
# ---------------------------------------------------------------------------

BOGUS_MODULES = ["smarthome_sdk", "iot_helpers", "home_automation", "light_controller", "thermo_utils", "devicekit",
                 "hue_bridge_api", "zigbee_home"]

DATA_DEFECTS = [
    # (description, payload, python body, js body)
    ("Set the kitchen light brightness to the \"level\" given in the JSON body.", '{"value": 40}',
     ['data = json.loads(input)', 'home.set("kitchen_light", "power", "on")', 'home.set("kitchen_light", "brightness", data["level"])'],
     ["const data = JSON.parse(input);", "await home.set('kitchen_light', 'power', 'on');", "await home.set('kitchen_light', 'brightness', data.settings.level);"]),
    ("Raise the kitchen light brightness by ten above the \"level\" in the JSON body.", '{"level": "40"}',
     ['data = json.loads(input)', 'home.set("kitchen_light", "brightness", data["level"] + 10)'],
     ["const data = JSON.parse(input);", "await home.set('kitchen_light', 'brightness', data.level.toFixed(0) + 10);"]),
    ("Turn on the light for the \"room\" named in the JSON body.", '{"place": "kitchen"}',
     ['data = json.loads(input)', 'room = data.get("room").lower()', 'home.set(room + "_light", "power", "on")'],
     ["const data = JSON.parse(input);", "const room = data.room.toLowerCase();", "await home.set(room + '_light', 'power', 'on');"]),
    ("Turn on the light of the first room in the JSON list \"rooms\".", '{"rooms": []}',
     ['data = json.loads(input)', 'first = data["rooms"][0]', 'home.set(first + "_light", "power", "on")'],
     ["const data = JSON.parse(input);", "const first = data.rooms[0].trim();", "await home.set(first + '_light', 'power', 'on');"]),
    ("Set the thermostat target from the JSON body field \"temp\".", "make it warm",
     ['data = json.loads(input)', 'home.set("thermostat", "target_temp", data["temp"])'],
     ["const data = JSON.parse(input);", "await home.set('thermostat', 'target_temp', data.temp);"]),
]

PROSE = [
    "I'm sorry, but I can't control physical devices in your home. Please use your smart-home app instead.",
    "To do this you would call the device API to switch the light on, then set its brightness. Let me know if you need more help!",
    "Sure! First read the request, then turn the light on with home.set, and finally return ok.",
]


def defects(easy, rng):
    tasks = []
    table = {"python3": {}, "nodejs": {}}
    base = easy[0]  # turn on the living room light
    n = 0

    def add(task_text, complexity, program, cases_suite, py_text, js_text):
        nonlocal n
        n += 1
        tid = "defect-%02d" % n
        tasks.append({"task_id": tid, "complexity": complexity, "subtask_count": 1, "description_text": task_text,
                      "runtime": "python3", "semantic_suite": cases_suite})
        table["python3"][tid] = [py_text]
        table["nodejs"][tid] = [js_text]

    suite = build_suite(base, rng)
    for i, mod in enumerate(BOGUS_MODULES):
        py_import = "import %s" % mod if i % 2 == 0 else "from %s import Client" % mod
        py = render_py(base["program"], "Turn on the living room light", extra_imports=[py_import])
        js = render_js(base["program"], "Turn on the living room light", extra_requires=["const sdk = require('%s');" % mod])
        add(base["text"], "easy", base["program"], suite, wrap(py, "python3", i), wrap(js, "nodejs", i))
    for i, (text, payload, py_body, js_body) in enumerate(DATA_DEFECTS):
        case = {"name": "case-1", "scenario": {"stimuli": [{"at": 1, "kind": "invoke_function", "payload": payload}]},
                "assertions": [{"type": "no_change", "device": "front_door"}]}
        py = "import json\nimport home\n\n\ndef fn(input):\n" + "".join("    %s\n" % l for l in py_body) + '    return "ok"\n'
        js = "const home = require('./home');\n\nasync function fn(input) {\n" + "".join("  %s\n" % l for l in js_body) + "  return 'ok';\n}\n\nmodule.exports = { fn };\n"
        add(text, "medium", None, [case], wrap(py, "python3", i), wrap(js, "nodejs", i))
    missing = [
        ("import home\n\n\ndef handle(input):\n    home.set(\"living_room_light\", \"power\", \"on\")\n    return \"ok\"\n",
         "const home = require('./home');\n\nasync function main(input) {\n  await home.set('living_room_light', 'power', 'on');\n  return 'ok';\n}\n\nmodule.exports = { main };\n"),
        ("import home\n\n\ndef turn_on_light():\n    home.set(\"living_room_light\", \"power\", \"on\")\n\n\nturn_on_light()\n",
         "const home = require('./home');\n\nhome.set('living_room_light', 'power', 'on');\n"),
        ("import home\n\n\ndef fn(input):\n    # TODO: turn on the living room light\n    pass\n",
         "const home = require('./home');\n\nasync function fn(input) {\n  // TODO: turn on the living room light\n}\n\nmodule.exports = { fn };\n"),
        ("import home\n\n\ndef fn(input):\n    \"\"\"Turn on the living room light.\"\"\"\n    raise NotImplementedError(\"fill in the device calls\")\n",
         "const home = require('./home');\n\nasync function fn(input) {\n  throw new Error('Not implemented');\n}\n\nmodule.exports = { fn };\n"),
    ]
    for i, (py, js) in enumerate(missing):
        add(base["text"], "easy", None, suite, wrap(py, "python3", i), wrap(js, "nodejs", i))
    for text in PROSE:
        add(base["text"], "easy", None, suite, text, text)
    assert len(tasks) == 20
    write("defects.json", {"tasks": tasks})
    for runtime, t in table.items():
        write("defects-%s.json" % runtime, t)


def repeats(advanced, rng):
    task = advanced[0]
    tid = "repeat-01"
    suite = build_suite(task, rng)
    write("repeat.json", {"tasks": [{"task_id": tid, "complexity": "advanced", "subtask_count": 3,
                                     "description_text": task["text"], "runtime": "python3", "semantic_suite": suite}]})
    for runtime in ("python3", "nodejs"):
        good = task_code(task, runtime)
        if runtime == "python3":
            broken = "import iot_helpers\n" + good
        else:
            broken = "const helpers = require('iot_helpers');\n" + good
        variants = [wrap(good, runtime, i) for i in range(9)]
        variants.insert(6, wrap(broken, runtime, 9))
        write("repeat-%s.json" % runtime, {tid: variants})


if __name__ == "__main__":
    main()
