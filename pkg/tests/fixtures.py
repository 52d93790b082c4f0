"""Shared fixture builders: a drug-domain micro-scenario and a 7-rule
bibliography mapping used by the chunking sweep."""

from __future__ import annotations

from schemamap.model import (
    AttributeDef,
    ForeignKey,
    Instance,
    RelationDef,
    SchemaDef,
)
from schemamap.rules import Atom, Constant, FilterPred, Rule, RuleMapping, Transform, Variable


def _attr(name, declared_type, nullable=True, description=None, values=()):
    return AttributeDef(
        name=name,
        declared_type=declared_type,
        nullable=nullable,
        description=description,
        sample_values=tuple(values),
    )


V = Variable


# --- drug scenario -----------------------------------------------------------


def drug_source_schema() -> SchemaDef:
    meds = RelationDef(
        name="meds",
        description="Local medications with generic names",
        attributes=(
            _attr("m_id", "int", nullable=False, values=["1", "2", "3"]),
            _attr("generic_name", "varchar(80)", description="Generic drug name",
                  values=["aspirin", "ibuprofen", "acetaminophen"]),
        ),
        primary_key=("m_id",),
    )
    trial = RelationDef(
        name="trial",
        description="Clinical trials for local medications",
        attributes=(
            _attr("m_id", "int", nullable=False, values=["1", "2"]),
            _attr("funder", "varchar(120)", description="Funding organization",
                  values=["NIH", "WHO"]),
            _attr("month", "int", values=["5", "11"]),
            _attr("day", "int", values=["1", "12"]),
            _attr("year", "int", values=["1995", "2003"]),
        ),
        foreign_keys=(ForeignKey(("m_id",), "meds", ("m_id",)),),
    )
    return SchemaDef(name="drug_source", relations=(meds, trial))


def drug_target_schema() -> SchemaDef:
    drugs = RelationDef(
        name="Drugs",
        description="Information on class, uses, and side effects",
        attributes=(
            _attr("drug_id", "int", nullable=False, description="Unique ID for drug"),
            _attr("brand_name", "varchar(80)", description="Brand name of drug",
                  values=["Aspirin", "Advil"]),
            _attr("drug_class", "varchar(80)", description="Drug class"),
            _attr("uses", "text", description="Typical uses"),
            _attr("side_effects", "text", description="Known side effects"),
        ),
        primary_key=("drug_id",),
    )
    trials = RelationDef(
        name="Clinical_Trials",
        description="Trials linked to drugs",
        attributes=(
            _attr("drug_id", "int", nullable=False, description="Drug being trialed"),
            _attr("funder", "varchar(120)", description="Funding organization",
                  values=["NIH"]),
            _attr("trial_date", "date", description="Trial date", values=["1995-05-01"]),
        ),
        foreign_keys=(ForeignKey(("drug_id",), "Drugs", ("drug_id",)),),
    )
    return SchemaDef(name="drug_target", relations=(drugs, trials))


def drug_trials_rule(tau1: str = "identity") -> Rule:
    """The running drug example: join meds and trial, keep recent trials,
    emit a Drugs row and a Clinical_Trials row sharing one surrogate."""
    brand = Transform(tau1, (V("g"),)) if tau1 else V("g")
    return Rule(
        id="drug_trials",
        universals=("i", "g", "f", "m", "d", "y"),
        source_atoms=(
            Atom("meds", (V("i"), V("g"))),
            Atom("trial", (V("i"), V("f"), V("m"), V("d"), V("y"))),
        ),
        filters=(FilterPred(V("y"), ">", Constant(1990)),),
        existentials=("x1", "x2", "x3", "x4"),
        target_atoms=(
            Atom("Drugs", (V("x1"), brand, V("x2"), V("x3"), V("x4"))),
            Atom("Clinical_Trials", (V("x1"), V("f"), Transform("date_concat", (V("m"), V("d"), V("y"))))),
        ),
    )


def drug_trials_mapping(tau1: str = "identity") -> RuleMapping:
    return RuleMapping(
        rules=(drug_trials_rule(tau1),),
        source_schema=drug_source_schema(),
        target_schema=drug_target_schema(),
    )


def drug_instance(rows=None) -> Instance:
    data = rows or {
        "meds": [{"m_id": 1, "generic_name": "aspirin"}],
        "trial": [{"m_id": 1, "funder": "NIH", "month": 5, "day": 1, "year": 1995}],
    }
    return Instance.from_dicts(drug_source_schema(), data)


# --- bibliography scenario (7 gold rules) ---------------------------------------


def biblio_source_schema() -> SchemaDef:
    article = RelationDef(
        name="article",
        attributes=(
            _attr("a_id", "int", nullable=False),
            _attr("title", "varchar(200)", values=["On Widgets", "Gadget Theory"]),
            _attr("venue_id", "int", nullable=False),
            _attr("year", "int", values=["1998", "2004"]),
            _attr("pages", "varchar(20)", values=["1-10"]),
        ),
        primary_key=("a_id",),
        foreign_keys=(ForeignKey(("venue_id",), "venue", ("venue_id",)),),
    )
    venue = RelationDef(
        name="venue",
        attributes=(
            _attr("venue_id", "int", nullable=False),
            _attr("v_name", "varchar(120)", values=["VLDB", "SIGMOD"]),
            _attr("publisher", "varchar(120)", values=["ACM", "Springer"]),
        ),
        primary_key=("venue_id",),
    )
    person = RelationDef(
        name="person",
        attributes=(
            _attr("person_id", "int", nullable=False),
            _attr("full_name", "varchar(120)", values=["Ada L.", "Alan T."]),
            _attr("affiliation", "varchar(120)"),
        ),
        primary_key=("person_id",),
    )
    authored = RelationDef(
        name="authored",
        attributes=(
            _attr("a_id", "int", nullable=False),
            _attr("person_id", "int", nullable=False),
        ),
        primary_key=("a_id", "person_id"),
        foreign_keys=(
            ForeignKey(("a_id",), "article", ("a_id",)),
            ForeignKey(("person_id",), "person", ("person_id",)),
        ),
    )
    techreport = RelationDef(
        name="techreport",
        attributes=(
            _attr("tr_id", "int", nullable=False),
            _attr("title", "varchar(200)"),
            _attr("institution", "varchar(120)"),
            _attr("number", "int"),
            _attr("month", "int"),
            _attr("day", "int"),
            _attr("year", "int"),
        ),
        primary_key=("tr_id",),
    )
    misc = RelationDef(
        name="misc",
        attributes=(
            _attr("m_id", "int", nullable=False),
            _attr("title", "varchar(200)"),
            _attr("how_published", "varchar(120)"),
            _attr("note", "varchar(200)"),
            _attr("year", "int"),
        ),
        primary_key=("m_id",),
    )
    return SchemaDef(
        name="biblio_src",
        relations=(article, venue, person, authored, techreport, misc),
    )


def biblio_target_schema() -> SchemaDef:
    pub = RelationDef(
        name="Pub",
        attributes=(
            _attr("pub_key", "varchar(40)", nullable=False),
            _attr("title", "varchar(200)"),
            _attr("year", "int"),
        ),
        primary_key=("pub_key",),
    )
    pub_venue = RelationDef(
        name="PubVenue",
        attributes=(
            _attr("pub_key", "varchar(40)", nullable=False),
            _attr("venue_name", "varchar(120)"),
        ),
        foreign_keys=(ForeignKey(("pub_key",), "Pub", ("pub_key",)),),
    )
    pub_pages = RelationDef(
        name="PubPages",
        attributes=(
            _attr("pub_key", "varchar(40)", nullable=False),
            _attr("pages", "varchar(20)"),
        ),
        foreign_keys=(ForeignKey(("pub_key",), "Pub", ("pub_key",)),),
    )
    author = RelationDef(
        name="Author",
        attributes=(
            _attr("author_key", "varchar(40)", nullable=False),
            _attr("name", "varchar(120)"),
        ),
        primary_key=("author_key",),
    )
    wrote = RelationDef(
        name="Wrote",
        attributes=(
            _attr("author_key", "varchar(40)", nullable=False),
            _attr("pub_key", "varchar(40)", nullable=False),
        ),
        primary_key=("author_key", "pub_key"),
        foreign_keys=(
            ForeignKey(("author_key",), "Author", ("author_key",)),
            ForeignKey(("pub_key",), "Pub", ("pub_key",)),
        ),
    )
    report = RelationDef(
        name="Report",
        attributes=(
            _attr("rep_key", "varchar(40)", nullable=False),
            _attr("title", "varchar(200)"),
            _attr("institution", "varchar(120)"),
            _attr("number", "int"),
            _attr("report_date", "date"),
        ),
        primary_key=("rep_key",),
        foreign_keys=(ForeignKey(("rep_key",), "Pub", ("pub_key",)),),
    )
    misc_pub = RelationDef(
        name="MiscPub",
        attributes=(
            _attr("misc_key", "varchar(40)", nullable=False),
            _attr("title", "varchar(200)"),
            _attr("note", "varchar(200)"),
        ),
        primary_key=("misc_key",),
    )
    return SchemaDef(
        name="biblio_tgt",
        relations=(pub, pub_venue, pub_pages, author, wrote, report, misc_pub),
    )


def biblio_rules() -> tuple[Rule, ...]:
    r1 = Rule(
        id="r1",
        universals=("a", "t", "v", "y", "p", "vn", "pub"),
        source_atoms=(
            Atom("article", (V("a"), V("t"), V("v"), V("y"), V("p"))),
            Atom("venue", (V("v"), V("vn"), V("pub"))),
        ),
        existentials=("x1",),
        target_atoms=(
            Atom("Pub", (V("x1"), V("t"), V("y"))),
            Atom("PubVenue", (V("x1"), V("vn"))),
        ),
    )
    r2 = Rule(
        id="r2",
        universals=("a", "t", "v", "y", "p"),
        source_atoms=(Atom("article", (V("a"), V("t"), V("v"), V("y"), V("p"))),),
        existentials=("x1",),
        target_atoms=(
            Atom("Pub", (V("x1"), V("t"), V("y"))),
            Atom("PubPages", (V("x1"), V("p"))),
        ),
    )
    r3 = Rule(
        id="r3",
        universals=("a", "pid", "nm", "aff", "t", "v", "y", "p"),
        source_atoms=(
            Atom("authored", (V("a"), V("pid"))),
            Atom("person", (V("pid"), V("nm"), V("aff"))),
            Atom("article", (V("a"), V("t"), V("v"), V("y"), V("p"))),
        ),
        existentials=("x1", "x2"),
        target_atoms=(
            Atom("Author", (V("x2"), V("nm"))),
            Atom("Pub", (V("x1"), V("t"), V("y"))),
            Atom("Wrote", (V("x2"), V("x1"))),
        ),
    )
    r4 = Rule(
        id="r4",
        universals=("tr", "t", "inst", "num", "m", "d", "y"),
        source_atoms=(
            Atom("techreport", (V("tr"), V("t"), V("inst"), V("num"), V("m"), V("d"), V("y"))),
        ),
        existentials=("x4",),
        target_atoms=(
            Atom("Report", (V("x4"), V("t"), V("inst"), V("num"),
                            Transform("date_concat", (V("m"), V("d"), V("y"))))),
        ),
    )
    r5 = Rule(
        id="r5",
        universals=("mm", "t", "hp", "nt", "y"),
        source_atoms=(Atom("misc", (V("mm"), V("t"), V("hp"), V("nt"), V("y"))),),
        filters=(FilterPred(V("y"), ">", Constant(1990)),),
        existentials=("x5",),
        target_atoms=(Atom("MiscPub", (V("x5"), V("t"), V("nt"))),),
    )
    r6 = Rule(
        id="r6",
        universals=("tr", "t", "inst", "num", "m", "d", "y"),
        source_atoms=(
            Atom("techreport", (V("tr"), V("t"), V("inst"), V("num"), V("m"), V("d"), V("y"))),
        ),
        filters=(FilterPred(V("y"), ">", Constant(1995)),),
        existentials=("x6",),
        target_atoms=(
            Atom("Pub", (V("x6"), V("t"), V("y"))),
            Atom("Report", (V("x6"), V("t"), V("inst"), V("num"),
                            Transform("date_concat", (V("m"), V("d"), V("y"))))),
        ),
    )
    r7 = Rule(
        id="r7",
        universals=("a", "t", "v", "y", "p", "vn", "pub"),
        source_atoms=(
            Atom("article", (V("a"), V("t"), V("v"), V("y"), V("p"))),
            Atom("venue", (V("v"), V("vn"), V("pub"))),
        ),
        filters=(FilterPred(V("pub"), "=", Constant("ACM")),),
        existentials=("x7",),
        target_atoms=(
            Atom("Pub", (V("x7"), V("t"), V("y"))),
            Atom("PubVenue", (V("x7"), Transform("concat", (V("vn"), V("pub"))))),
        ),
    )
    return (r1, r2, r3, r4, r5, r6, r7)


def biblio_mapping() -> RuleMapping:
    return RuleMapping(
        rules=biblio_rules(),
        source_schema=biblio_source_schema(),
        target_schema=biblio_target_schema(),
    )
