#!/usr/bin/env python3
"""Regenerates the fixture corpora and golden files.

Screens are authored as lists of rendered elements `(tag, class_words, alt,
text)` and expanded into RICO-style view hierarchies with containers and
hidden decoy nodes. Golden HTML and prompt files are produced by the small
reference renderer below, which is independent of the Rust implementation.

Usage: python3 fixtures/build_fixtures.py   (from the repository root)
"""

import json
import random
import re
from pathlib import Path

ROOT = Path(__file__).resolve().parent
SCREEN_W, SCREEN_H = 1440, 2560

OBJ = "java.lang.Object"
VIEW = "android.view.View"
CLASSES = {
    "p": ("android.widget.TextView", [VIEW, OBJ]),
    "button": ("android.widget.Button", ["android.widget.TextView", VIEW, OBJ]),
    "icon_button": ("android.widget.ImageButton", ["android.widget.ImageView", VIEW, OBJ]),
    "img": ("android.widget.ImageView", [VIEW, OBJ]),
    "input": ("android.widget.EditText", ["android.widget.TextView", VIEW, OBJ]),
    "div": (VIEW, [OBJ]),
}
LINEAR = ("android.widget.LinearLayout", ["android.view.ViewGroup", VIEW, OBJ])
FRAME = ("android.widget.FrameLayout", ["android.view.ViewGroup", VIEW, OBJ])

# ---------------------------------------------------------------------------
# Reference renderer


def escape(s):
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def flatten(s):
    return s.replace("\r\n", " ").replace("\n", " ").replace("\r", " ")


def render_line(i, tag, words, alt, text):
    line = f"<{tag} id={i}"
    if words:
        line += f' class="{escape(flatten(words))}"'
    if alt:
        line += f' alt="{escape(flatten(alt))}"'
    return line + f"> {escape(flatten(text or ''))} </{tag}>"


def render(elements):
    return "\n".join(render_line(i, *e) for i, e in enumerate(elements))


LINE = re.compile(r'^<(\w+) id=(\d+)(?: class="([^"]*)")?(?: alt="([^"]*)")?>(.*)</\1>$')


def parse_lines(block):
    """Reads loosely spaced element lines into (tag, words, alt, text)."""
    out = []
    for raw in block.strip("\n").split("\n"):
        m = LINE.match(raw.strip())
        assert m, raw
        tag, idx, words, alt, text = m.groups()
        assert int(idx) == len(out), raw
        out.append((tag, words, alt, text.strip() or None))
    return out


# ---------------------------------------------------------------------------
# View hierarchy synthesis


def leaf_node(pkg, tag, words, alt, text, box):
    kind = tag
    if tag == "button" and not text:
        kind = "icon_button"
    cls, anc = CLASSES[kind]
    node = {"class": cls, "ancestors": anc, "bounds": box, "visible-to-user": True, "children": []}
    if words:
        prefix = "android" if words.endswith("Background") else pkg
        node["resource-id"] = f"{prefix}:id/{words.replace(' ', '_')}"
    if alt:
        node["content-desc"] = [alt]
    if text:
        node["text"] = text
    return node


def hierarchy(pkg, elements, activity):
    """Stacks the elements vertically inside grouped LinearLayouts."""
    groups = []
    top = 96
    for start in range(0, len(elements), 3):
        chunk = elements[start : start + 3]
        g_top = top
        children = []
        for tag, words, alt, text in chunk:
            box = [24, top, SCREEN_W - 24, top + 56]
            children.append(leaf_node(pkg, tag, words, alt, text, box))
            top += 64
        # Hidden and zero-area siblings must never render.
        children.insert(1, {"class": "android.widget.ImageView", "ancestors": CLASSES["img"][1],
                            "bounds": [24, g_top, 120, g_top + 56], "visible-to-user": False})
        children.append({"class": VIEW, "ancestors": [OBJ], "bounds": [24, top, 24, top],
                         "visible-to-user": True})
        groups.append({"class": LINEAR[0], "ancestors": LINEAR[1], "bounds": [0, g_top, SCREEN_W, top],
                       "visible-to-user": True, "children": children})
    root = {"class": FRAME[0], "ancestors": FRAME[1], "bounds": [0, 0, SCREEN_W, SCREEN_H],
            "visible-to-user": True, "package": pkg, "children": groups + [None]}
    return {"activity_name": f"{pkg}/{activity}", "activity": {"root": root}}


def write_json(path, value):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(value, indent=1, ensure_ascii=False) + "\n", encoding="utf-8")


def write_jsonl(path, records):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records), encoding="utf-8")


def write_text(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# Reference screens

REFERENCE = {
    "create_password": ("com.appcrawler.vault", ".CreatePasswordActivity", """
<p id=0 class="alertTitle">  Create password  </p>
<div id=1 class="titleDivider">   </div>
<input id=2 class="password">  Crowd3116  </input>
<input id=3 class="confirm password">  Crowd3116  </input>
<input id=4 class="hint">  c3  </input>
<input id=5 class="edEmailAddress">  appcrawler4@gmail.com  </input>
<p id=6 class="tvEmailAddressInfo">  This email address will be used to reset your password.  </p>
<button id=7 class="button2">  Cancel  </button>
<button id=8 class="button1">  OK  </button>
"""),
    "refund_status": ("gov.irs", ".RefundStatusActivity", """
<p id=0> IRS2Go,  </p>
<button id=1 alt="Open navigation drawer">  </button>
<p id=2 class="titleRefund"> Refund Status </p>
<p id=3 class="refundHeaderText"> Check your refund status by entering your information as shown on your 2015 tax return. This tool is updated no more than once every 24 hours, usually overnight.  </p>
<input id=4 class="taxId3Edit" alt="First 3 Digits of Social Security Number">  </input>
<p id=5 class="dash1"> - </p>
<input id=6 class="taxId2Edit" alt="Middle 2 Digits of Social Security Number">  </input>
<p id=7 class="dash2"> - </p>
<input id=8 class="taxId4Edit" alt="Last 4 Digits of Social Security Number">  </input>
<p id=9> Filing Status </p>
<input id=10 class="refundAmountEdit">  </input>
<button id=11 class="privacyNoticeButton" alt="Privacy Notice"> Privacy Notice,  </button>
<button id=12 class="getStatusButton" alt="Get Status"> GET STATUS,  </button>
<div id=13 class="navigationBarBackground">  </div>
<div id=14 class="statusBarBackground">  </div>
"""),
    "contacts_search": ("com.android.contacts", ".activities.PeopleActivity", """
<img id=0>  </img>
<p id=1 class="cliv name textview"> Create new contact  </p>
<img id=2>  </img>
<p id=3 class="cliv name textview"> Add to a contact  </p>
<img id=4>  </img>
<p id=5 class="cliv name textview"> Send SMS  </p>
<button id=6 class="floating action button" alt="dial pad">  </button>
<button id=7 class="search back button" alt="stop searching">  </button>
<input id=8 class="search view"> 18773312998  </input>
<img id=9 class="search close button" alt="Clear search">  </img>
<div id=10 class="navigationBarBackground">  </div>
<div id=11 class="statusBarBackground">  </div>
"""),
    "chat_invite": ("com.t20fans.livechat", ".InviteActivity", """
<p id=0> Invite for T20 Fans Live Chat  </p>
<button id=1 alt="Choose account">  </button>
<p id=2 class="menu send" alt="Send">  </p>
<p id=3 class="message header"> Message  </p>
<input id=4 class="message"> Join me on T20 Fans Live chat.  </input>
<div id=5 class="message separator">  </div>
<p id=6 class="message limit">  </p>
<div id=7 class="separator">  </div>
<p id=8 class="selection"> Add recipients  </p>
<div id=9 class="separator">  </div>
<p id=10 class="text"> Suggestions from Google  </p>
<p id=11> A,  </p>
<p id=12 class="name"> appcrawler5@gmail.com  </p>
<p id=13 class="contact detail"> appcrawler5@gmail.com  </p>
<img id=14 class="contact method">  </img>
<div id=15 class="divider">  </div>
<p id=16> A,  </p>
<p id=17 class="name"> appcrawler4@gmail.com  </p>
<p id=18 class="contact detail"> appcrawler4@gmail.com  </p>
<img id=19 class="contact method">  </img>
<div id=20 class="divider">  </div>
<p id=21 class="text"> Everyone  </p>
<img id=22>  </img>
<p id=23 class="name"> App Crawler  </p>
<p id=24 class="contact detail"> (415) 336-5454  </p>
<img id=25 class="contact method">  </img>
<img id=26 class="channel switcher icon">  </img>
<div id=27 class="divider">  </div>
<p id=28> T,  </p>
<p id=29 class="name"> test,  </p>
<p id=30 class="contact detail"> (415) 336-5454  </p>
<img id=31 class="contact method">  </img>
<img id=32 class="channel switcher icon">  </img>
<div id=33 class="divider">  </div>
<div id=34 class="navigationBarBackground">  </div>
<div id=35 class="statusBarBackground">  </div>
"""),
    "app_drawer": ("com.google.android.apps.nexuslauncher", ".NexusLauncherActivity", """
<div id=0 alt="Apps list">  </div>
<img id=1 class="g icon">  </img>
<img id=2 class="mic icon" alt="Voice search">  </img>
<p id=3 class="icon" alt="Calculator"> Calculator  </p>
<p id=4 class="icon" alt="Calendar"> Calendar  </p>
<p id=5 class="icon" alt="Camera"> Camera  </p>
<p id=6 class="icon" alt="Chrome"> Chrome  </p>
<p id=7 class="icon" alt="Clock"> Clock  </p>
<p id=8 class="icon" alt="Contacts"> Contacts  </p>
<p id=9 class="icon" alt="Custom Locale"> Custom Locale  </p>
<p id=10 class="icon" alt="Dev Tools"> Dev Tools  </p>
<p id=11 class="icon" alt="Drive"> Drive  </p>
<p id=12 class="icon" alt="Files"> Files  </p>
<p id=13 class="icon" alt="Gmail"> Gmail  </p>
<p id=14 class="icon" alt="Google"> Google  </p>
<p id=15 class="icon" alt="Hangouts"> Hangouts  </p>
<p id=16 class="icon" alt="Maps"> Maps  </p>
<p id=17 class="icon" alt="Messages"> Messages  </p>
<p id=18 class="icon" alt="Phone"> Phone  </p>
<p id=19 class="icon" alt="Photos"> Photos  </p>
<p id=20 class="icon" alt="Play Movies & TV"> Play Movies & TV  </p>
<p id=21 class="icon" alt="Play Music"> Play Music  </p>
<p id=22 class="icon" alt="Settings"> Settings  </p>
<p id=23 class="icon" alt="WebView Browser Tester"> WebView Browser Tester  </p>
<p id=24 class="icon" alt="YouTube"> YouTube  </p>
<p id=25 class="icon" alt="Photos"> Photos  </p>
<p id=26 class="icon" alt="Maps"> Maps  </p>
<p id=27 class="icon" alt="Contacts"> Contacts  </p>
<p id=28 class="icon" alt="Settings"> Settings  </p>
<p id=29 class="icon" alt="Clock"> Clock  </p>
<div id=30 class="fast scroller">  </div>
<div id=31>  </div>
<div id=32 class="hotseat">  </div>
"""),
}

COT = [
    {
        "screen_id": "create_password",
        "summary": "Create password.",
        "page_label": "create password",
        "enumeration": [
            {"id": 2, "purpose": "asks for password."},
            {"id": 3, "purpose": "asks to confirm password."},
            {"id": 4, "purpose": "asks for hint."},
            {"id": 5, "purpose": "asks for email address."},
        ],
        "questions": [
            {"text": "What password do you want to create?", "element_indexes": [2]},
            {"text": "Could you enter the password again to confirm?", "element_indexes": [3]},
            {"text": "What hint do you want to set?", "element_indexes": [4]},
            {"text": "What is your email in case you need to reset the password?", "element_indexes": [5]},
        ],
    },
    {
        "screen_id": "refund_status",
        "summary": "Check your refund status.",
        "page_label": "check refund status",
        "enumeration": [
            {"id": 4, "purpose": "asks for first 3 digits of SSN"},
            {"id": 6, "purpose": "asks for middle 2 digits of SSN"},
            {"id": 8, "purpose": "asks for last 4 digits of SSN"},
            {"id": 10, "purpose": "asks for the amount of refund."},
        ],
        "questions": [
            {"text": "What is your SSN?", "element_indexes": [4, 6, 8]},
            {"text": "What is the refund amount?", "element_indexes": [10]},
        ],
    },
]

REFERENCE_SUMMARIES = [{"screen_id": "contacts_search", "summaries": ["Screen of contact settings options"]}]
REFERENCE_QA = [{"screen_id": "chat_invite", "question": "What email addresses are there?",
                 "answer": "appcrawler5@gmail.com", "answer_in_hierarchy": True}]
REFERENCE_TASKS = [{"task_id": "open_clock", "app_package": "com.google.android.apps.nexuslauncher",
                    "steps": [{"screen_id": "app_drawer", "instruction": "Open your device's Clock app.",
                               "gold_index": 29}]}]

PREAMBLE = {
    "generate-questions": "Given a screen, the agent needs to identify the elements requiring user input and generates corresponding questions.",
    "summarize": "Given a screen, summarize its purpose.",
    "qa": "Given a mobile screen and a question, provide the answer based on the screen information.",
    "act": "Given a screen, an instruction, predict the id of the UI element to perform the instruction.",
}

COUNT_Q = "Q: How many input tags are there on the screen?"
PURPOSE_Q = "Q: What is the purpose of the screen?"


def cot_block(rec, n_inputs):
    lines = [
        "Now reasoning starts:", COUNT_Q, f"A: {n_inputs}", PURPOSE_Q, f"A: {rec['summary']}", "",
        f"It's a {rec['page_label']} page and there are {n_inputs} input tags, including:",
    ]
    lines += [f"{k}. id={f['id']} {f['purpose']}" for k, f in enumerate(rec["enumeration"], 1)]
    lines += ["", "To help the user proceed with the screen, an agent will ask:"]
    for q in rec["questions"]:
        ids = ", ".join(f"id={i}" for i in q["element_indexes"])
        lines.append(f"<SOQ>{q['text']} ({ids})<EOQ>")
    return "\n".join(lines)


def n_inputs(elements):
    return sum(1 for e in elements if e[0] == "input")


def prompt(task, blocks, test):
    return PREAMBLE[task] + "\n\n" + "".join(f"Screen:\n{html}\n\n{tail}\n\n" for html, tail in blocks) + test


def build_reference():
    out = ROOT / "reference"
    parsed = {sid: parse_lines(block) for sid, (_, _, block) in REFERENCE.items()}
    for sid, (pkg, activity, _) in REFERENCE.items():
        write_json(out / "screens" / f"{sid}.json", hierarchy(pkg, parsed[sid], activity))
        write_text(ROOT / "golden" / f"{sid}.html", render(parsed[sid]))
    write_jsonl(out / "cot.jsonl", COT)
    write_jsonl(out / "summaries.jsonl", REFERENCE_SUMMARIES)
    write_jsonl(out / "qa.jsonl", REFERENCE_QA)
    write_jsonl(out / "tasks.jsonl", REFERENCE_TASKS)

    html = {sid: render(els) for sid, els in parsed.items()}
    cases = []

    def case(task, shots, seed, screen, text, **inputs):
        name = f"{task}_{shots}shot.txt"
        write_text(ROOT / "golden" / "prompts" / name, text)
        cases.append({"file": name, "task": task, "shots": shots, "seed": seed, "screen": screen, **inputs})

    test_qg = lambda sid: (f"Screen:\n{html[sid]}\n\nNow reasoning starts:\n{COUNT_Q}\n"
                           f"A: {n_inputs(parsed[sid])}\n{PURPOSE_Q}\nA:")
    qg_blocks = [(html[r["screen_id"]], cot_block(r, n_inputs(parsed[r["screen_id"]]))) for r in COT]
    case("generate-questions", 2, 10, "contacts_search",
         prompt("generate-questions", qg_blocks, test_qg("contacts_search")))
    case("generate-questions", 0, 0, "chat_invite", prompt("generate-questions", [], test_qg("chat_invite")))

    case("summarize", 1, 7, "app_drawer",
         prompt("summarize", [(html["contacts_search"], "Summary: <SOS>Screen of contact settings options<EOS>")],
                f"Screen:\n{html['app_drawer']}\n\nSummary:"))

    q = "What number is in the search box?"
    case("qa", 1, 7, "contacts_search",
         prompt("qa", [(html["chat_invite"], "Q: What email addresses are there?\nA: <SOA>appcrawler5@gmail.com<EOA>")],
                f"Screen:\n{html['contacts_search']}\n\nQ: {q}\nA:"), question=q)

    ins = "Clear the search."
    case("act", 1, 7, "contacts_search",
         prompt("act", [(html["app_drawer"], "Instruction: Open your device's Clock app.\nPrediction: id=<SOI>29<EOI>")],
                f"Screen:\n{html['contacts_search']}\n\nInstruction: {ins}\nPrediction: id="), instruction=ins)
    write_json(ROOT / "golden" / "prompts" / "cases.json", cases)
    return parsed


# ---------------------------------------------------------------------------
# Demo corpus: twelve screens with QA and multi-step instruction records


def els(*rows):
    return [tuple(r) for r in rows]


NAV = ("div", "navigationBarBackground", None, None)
STATUS = ("div", "statusBarBackground", None, None)

DEMO_EXTRA = {
    "home_screen": ("com.google.android.apps.nexuslauncher", ".NexusLauncherActivity", els(
        ("img", "g icon", None, None),
        ("img", "mic icon", "Voice search", None),
        ("p", "clock", None, "9:41"),
        ("p", "date", None, "Tuesday, May 3"),
        ("p", "icon", "Phone", "Phone"),
        ("p", "icon", "Messages", "Messages"),
        ("p", "icon", "Chrome", "Chrome"),
        ("p", "icon", "Camera", "Camera"),
        ("button", "all apps handle", "Apps list", None),
        ("div", "hotseat", None, None),
        NAV, STATUS)),
    "settings_main": ("com.android.settings", ".Settings", els(
        ("p", "action bar title", None, "Settings"),
        ("img", "search action bar", "Search settings", None),
        ("p", "title", None, "Network & internet"),
        ("p", "summary", None, "Wi-Fi, mobile, data usage, and hotspot"),
        ("p", "title", None, "Connected devices"),
        ("p", "summary", None, "Bluetooth, NFC"),
        ("p", "title", None, "Apps & notifications"),
        ("p", "summary", None, "Permissions, default apps"),
        ("p", "title", None, "Battery"),
        ("p", "summary", None, "62% - More than 2 days remaining"),
        ("p", "title", None, "Display"),
        ("p", "summary", None, "Wallpaper, sleep, font size"),
        NAV, STATUS)),
    "settings_wifi": ("com.android.settings", ".SubSettings", els(
        ("button", None, "Navigate up", None),
        ("p", "action bar title", None, "Wi-Fi"),
        ("p", "switch text", None, "On"),
        ("button", "switch widget", None, "ON"),
        ("img", "wifi signal", None, None),
        ("p", "title", None, "HomeNet-5G"),
        ("p", "summary", None, "Connected"),
        ("img", "wifi signal", None, None),
        ("p", "title", None, "CoffeeShop Guest"),
        ("p", "summary", None, "Saved"),
        ("p", "title", None, "Add network"),
        ("p", "title", None, "Wi-Fi preferences"),
        NAV, STATUS)),
    "settings_display": ("com.android.settings", ".SubSettings", els(
        ("button", None, "Navigate up", None),
        ("p", "action bar title", None, "Display"),
        ("p", "title", None, "Brightness level"),
        ("p", "summary", None, "48%"),
        ("p", "title", None, "Night Light"),
        ("p", "summary", None, "Off / Will never turn on automatically"),
        ("p", "title", None, "Adaptive brightness"),
        ("button", "switch widget", None, "OFF"),
        ("p", "title", None, "Wallpaper"),
        ("p", "title", None, "Sleep"),
        ("p", "summary", None, "After 5 minutes of inactivity"),
        NAV, STATUS)),
    "mail_inbox": ("com.google.android.gm", ".ConversationListActivityGmail", els(
        ("button", None, "Open navigation drawer", None),
        ("p", "open search", None, "Search mail"),
        ("img", "og avatar", "Account", None),
        ("p", "label", None, "Primary"),
        ("img", "contact image", "Alex Chen", None),
        ("p", "senders", None, "Alex Chen"),
        ("p", "subject", None, "Team lunch on Friday"),
        ("p", "snippet", None, "Let's meet at noon at the usual place."),
        ("p", "date", None, "10:15 AM"),
        ("img", "contact image", "Billing", None),
        ("p", "senders", None, "Billing"),
        ("p", "subject", None, "Your invoice is ready"),
        ("p", "snippet", None, "Invoice #2291 for April"),
        ("p", "date", None, "May 2"),
        ("button", "compose button", "Compose", "Compose"),
        NAV, STATUS)),
    "mail_message": ("com.google.android.gm", ".ConversationViewActivity", els(
        ("button", None, "Navigate up", None),
        ("button", "archive", "Archive", None),
        ("button", "delete", "Delete", None),
        ("button", "mark unread", "Mark unread", None),
        ("p", "subject", None, "Team lunch on Friday"),
        ("p", "sender name", None, "Alex Chen"),
        ("p", "recipient summary", None, "to me"),
        ("p", "body", None, "Let's meet at noon at the usual place."),
        ("button", "reply button", "Reply", None),
        ("button", "forward button", "Forward", None),
        NAV, STATUS)),
    "about_app": ("com.example.notes", ".AboutActivity", els(
        ("button", None, "Navigate up", None),
        ("p", "action bar title", None, "About"),
        ("img", "app icon", "Notes", None),
        ("p", "app name", None, "Notes"),
        ("p", "version", None, "Version 2.7.3"),
        ("p", "copyright", None, "© 2016 Example Inc."),
        ("p", "title", None, "Open source licenses"),
        ("p", "title", None, "Privacy policy"),
        NAV, STATUS)),
}

DEMO_QA = [
    {"screen_id": "chat_invite", "question": "What email addresses are there?",
     "answer": "appcrawler5@gmail.com", "answer_in_hierarchy": True},
    {"screen_id": "about_app", "question": "What version is the app?", "answer": "2.7.3",
     "answer_in_hierarchy": True},
    {"screen_id": "mail_inbox", "question": "What's the title of the newest mail?",
     "answer": "Team lunch on Friday", "answer_in_hierarchy": True},
    {"screen_id": "settings_wifi", "question": "Which network is connected?", "answer": "HomeNet-5G",
     "answer_in_hierarchy": True},
    {"screen_id": "refund_status", "question": "What is the tax year?", "answer": "2015",
     "answer_in_hierarchy": True},
    {"screen_id": "about_app", "question": "Who is the developer?", "answer": "Jane Doe",
     "answer_in_hierarchy": False},
]
# Continuations for the five in-hierarchy items, in item order: three exact,
# one containing the ground truth, one unrelated.
DEMO_QA_OUTPUTS = [
    " <SOA>appcrawler5@gmail.com<EOA>",
    " <SOA>version 2.7.3<EOA>",
    " <SOA>Team lunch on Friday<EOA>",
    " <SOA>HomeNet-5G<EOA>",
    " <SOA>Filing Status<EOA>",
]

DEMO_TASKS = [
    {"task_id": "open_clock", "app_package": "com.google.android.apps.nexuslauncher", "steps": [
        {"screen_id": "home_screen", "instruction": "Open the app drawer.", "gold_index": 8},
        {"screen_id": "app_drawer", "instruction": "Open your device's Clock app.", "gold_index": 29}]},
    {"task_id": "wifi_off", "app_package": "com.android.settings", "steps": [
        {"screen_id": "settings_main", "instruction": "Open Network & internet settings.", "gold_index": 2},
        {"screen_id": "settings_wifi", "instruction": "Turn off Wi-Fi.", "gold_index": 3}]},
    {"task_id": "brightness", "app_package": "com.android.settings", "steps": [
        {"screen_id": "settings_display", "instruction": "Open the brightness level setting.", "gold_index": 2}]},
    {"task_id": "archive_newest_mail", "app_package": "com.google.android.gm", "steps": [
        {"screen_id": "mail_inbox", "instruction": "Open the newest email.", "gold_index": 6},
        {"screen_id": "mail_message", "instruction": "Archive this email.", "gold_index": 1}]},
]
# Step order as above: correct, correct, correct, wrong id, correct, correct,
# no parseable id.
DEMO_ACT_OUTPUTS = [
    "<SOI>8<EOI>",
    "<SOI>29<EOI>",
    "<SOI>2<EOI>",
    "<SOI>5<EOI>",
    "<SOI>2<EOI>",
    "<SOI>6<EOI>",
    "I would tap the archive icon.",
]

DEMO_SUMMARIES = [
    {"screen_id": "contacts_search", "summaries": ["Screen of contact settings options",
                                                   "search results for a phone number"]},
    {"screen_id": "settings_main", "summaries": ["list of settings categories", "main settings page"]},
    {"screen_id": "mail_inbox", "summaries": ["inbox of an email app"]},
    {"screen_id": "app_drawer", "summaries": ["app drawer listing installed apps"]},
]


def build_demo(reference):
    out = ROOT / "demo"
    for sid, (pkg, activity, _) in REFERENCE.items():
        write_json(out / "screens" / f"{sid}.json", hierarchy(pkg, reference[sid], activity))
    for sid, (pkg, activity, elements) in DEMO_EXTRA.items():
        write_json(out / "screens" / f"{sid}.json", hierarchy(pkg, elements, activity))
    write_jsonl(out / "qa.jsonl", DEMO_QA)
    write_jsonl(out / "tasks.jsonl", DEMO_TASKS)
    write_jsonl(out / "summaries.jsonl", DEMO_SUMMARIES)
    write_jsonl(out / "cot.jsonl", COT)
    write_json(out / "scripted" / "qa.json", {"kind": "scripted", "responses": DEMO_QA_OUTPUTS})
    write_json(out / "scripted" / "act.json", {"kind": "scripted", "responses": DEMO_ACT_OUTPUTS})


# ---------------------------------------------------------------------------
# Synthetic corpus: randomized hierarchies exercising every conversion rule

SYN_CLASSES = [
    ("android.widget.TextView", [VIEW, OBJ], "p"),
    ("android.widget.CheckedTextView", ["android.widget.TextView", VIEW, OBJ], "p"),
    ("android.widget.Button", ["android.widget.TextView", VIEW, OBJ], "button"),
    ("android.widget.ImageButton", ["android.widget.ImageView", VIEW, OBJ], "button"),
    ("android.support.v7.widget.AppCompatImageButton", ["android.widget.ImageButton", VIEW], "button"),
    ("android.widget.ImageView", [VIEW, OBJ], "img"),
    ("android.widget.EditText", ["android.widget.TextView", VIEW, OBJ], "input"),
    ("android.support.design.widget.TextInputEditText", ["android.widget.EditText", VIEW], "input"),
    ("android.widget.LinearLayout", LINEAR[1], "div"),
    ("android.view.View", [OBJ], "div"),
    ("com.example.widget.FancyLabel", ["android.widget.TextView", VIEW, OBJ], "p"),
    ("com.example.widget.RoundAvatar", ["android.widget.ImageView", VIEW, OBJ], "img"),
    ("com.buttons.Widget", [VIEW, OBJ], "div"),
    ("com.example.Outer$SubmitButton", [VIEW, OBJ], "button"),
    ("com.example.EditTextImageCombo", [VIEW, OBJ], "input"),
    ("com.example.ImageTextView", [VIEW, OBJ], "img"),
]
REQUIRED = ["android.widget.EditText", "android.widget.ImageButton", "android.widget.ImageView",
            "android.widget.TextView", "android.widget.LinearLayout"]
CONTAINERS = [LINEAR, FRAME, ("android.widget.RelativeLayout", ["android.view.ViewGroup", VIEW, OBJ]),
              ("android.support.v7.widget.RecyclerView", ["android.view.ViewGroup", VIEW, OBJ])]
WORDS = ["title", "unread", "count", "textView", "date", "search", "box", "main", "icon", "toolbar", "send",
         "btn", "email", "input", "field", "avatar", "header", "row", "label", "price", "min", "max"]
TEXTS = ["Sign in", "Inbox", "Dec 23rd, 2016", "Version 2.7.3", "Play Movies & TV", "a < b > c",
         'Say "hi"', "Line one\nLine two", "Crowd3116", "café", "日本語", "OK", "Cancel",
         "42", "Price range", "Tom & Jerry's <b>"]


def syn_resource(rng):
    if rng.random() < 0.3:
        return None
    words = [rng.choice(WORDS) for _ in range(rng.randint(1, 3))]
    name = rng.choice(["_", "__"]).join(words)
    if rng.random() < 0.1:
        name = "_" + name + "_"
    style = rng.random()
    if style < 0.7:
        return f"com.example.app:id/{name}"
    if style < 0.85:
        return f"android:id/{name}"
    return name


def syn_leaf(rng, cls=None):
    if cls is None:
        cls, anc, _ = rng.choice(SYN_CLASSES)
    else:
        anc = next(a for c, a, _ in SYN_CLASSES if c == cls)
    node = {"class": cls, "ancestors": anc, "children": []}
    if rng.random() < 0.6:
        node["text"] = rng.choice(TEXTS)
    rid = syn_resource(rng)
    if rid:
        node["resource-id"] = rid
    r = rng.random()
    if r < 0.2:
        node["content-desc"] = [rng.choice(TEXTS)]
    elif r < 0.35:
        node["content-desc"] = rng.choice(TEXTS)
    elif r < 0.4:
        node["content-desc"] = [None]
    return node


def syn_tree(rng, depth):
    if depth == 0 or rng.random() < 0.3:
        return syn_leaf(rng)
    cls, anc = rng.choice(CONTAINERS)
    kids = [syn_tree(rng, depth - 1) for _ in range(rng.randint(1, 4))]
    return {"class": cls, "ancestors": anc, "children": kids}


def assign_bounds(rng, node, box):
    """Gives every node a box inside its parent; some are hidden on purpose."""
    node["bounds"] = list(box)
    roll = rng.random()
    if roll < 0.06:
        node["visible-to-user"] = False
    elif roll < 0.09:
        l, t, r, b = box
        node["bounds"] = [r, b, l, t]  # inverted
    elif roll < 0.12:
        l, t, r, b = box
        node["bounds"] = [SCREEN_W + 10, t, SCREEN_W + 200, b]  # off screen
    elif roll < 0.5:
        node["visible-to-user"] = True
    kids = node.get("children", [])
    if not kids:
        return
    l, t, r, b = box
    h = max((b - t) // len(kids), 2)
    for i, k in enumerate(kids):
        if k is None:
            continue
        assign_bounds(rng, k, (l + 4, t + i * h, r - 4, t + (i + 1) * h - 1))


def node_visible(n):
    if not n.get("visible-to-user", True):
        return False
    l, t, r, b = n["bounds"]
    if r < l or b < t:
        return False
    if (r - l) * (b - t) <= 0:
        return False
    return max(l, 0) < min(r, SCREEN_W) and max(t, 0) < min(b, SCREEN_H)


def leaves(n):
    out = []
    for k in n.get("children") or []:
        if k is not None:
            out += leaves(k)
    if not out and node_visible(n):
        out = [n]
    return out


def simple(name):
    return re.split(r"[.$]", name)[-1].lower()


def tag_for(cls, anc):
    for name in [cls] + anc:
        s = simple(name)
        for needle, tag in [("edittext", "input"), ("button", "button"), ("image", "img"), ("textview", "p")]:
            if needle in s:
                return tag
    return "div"


def words_for(rid):
    if rid is None:
        return None
    name = rid.rsplit("/", 1)[1] if "/" in rid else rid.rsplit(":", 1)[-1]
    w = " ".join(p for p in name.split("_") if p)
    return w or None


def desc_for(n):
    d = n.get("content-desc")
    if isinstance(d, list):
        d = d[0] if d else None
    return d if isinstance(d, str) and d else None


def build_synthetic():
    rng = random.Random(50)
    out = ROOT / "synthetic"
    for i in range(50):
        sid = f"syn_{i:02d}"
        kids = [syn_tree(rng, 3) for _ in range(rng.randint(2, 5))]
        showcase = {"class": LINEAR[0], "ancestors": LINEAR[1],
                    "children": [syn_leaf(rng, c) for c in REQUIRED]}
        for leaf in showcase["children"]:
            leaf["resource-id"] = "com.example.app:id/unread_count_textView"
        kids.insert(rng.randint(0, len(kids)), showcase)
        if rng.random() < 0.5:
            kids.insert(rng.randint(0, len(kids)), None)
        root = {"class": FRAME[0], "ancestors": FRAME[1], "children": kids}
        assign_bounds(rng, root, (0, 0, SCREEN_W, SCREEN_H))
        root["bounds"] = [0, 0, SCREEN_W, SCREEN_H]
        root["visible-to-user"] = True
        # Keep the showcase leaves visible.
        sl, st, sr, sb = showcase["bounds"]
        if sr < sl or sb < st or sl >= SCREEN_W:
            showcase["bounds"] = [0, 0, SCREEN_W, 200]
        showcase["visible-to-user"] = True
        for k, leaf in enumerate(showcase["children"]):
            l, t, r, b = showcase["bounds"]
            h = max((b - t) // 5, 2)
            leaf["bounds"] = [l + 4, t + k * h, r - 4, t + (k + 1) * h - 1]
            leaf["visible-to-user"] = True
        doc = {"activity_name": f"com.example.syn{i % 7}/.Main", "activity": {"root": root}}
        write_json(out / "screens" / f"{sid}.json", doc)
        elements = [(tag_for(n["class"], n.get("ancestors", [])), words_for(n.get("resource-id")), desc_for(n),
                     n.get("text") or None) for n in leaves(root)]
        write_text(out / "golden" / f"{sid}.html", render(elements))


if __name__ == "__main__":
    reference = build_reference()
    build_demo(reference)
    build_synthetic()
