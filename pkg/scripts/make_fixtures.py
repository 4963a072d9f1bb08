#!/usr/bin/env python3
"""Regenerate the fixture stations under fixtures/stations/.

10 stations, 179 binary criteria total (17/18/19/... per station).  Texts
are synthetic French interview actions; a few criteria are composite
("... ou ...") and a few stations declare dependencies.
"""

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent

STATIONS = [
    # (id, criterion count, theme, chief complaint)
    ("102", 18, "douleur thoracique", "une douleur dans la poitrine depuis ce matin"),
    ("107", 18, "céphalées chroniques", "des maux de tête répétés depuis trois mois"),
    ("113", 17, "sevrage tabagique", "une volonté d'arrêter de fumer"),
    ("121", 18, "lombalgie aiguë", "une douleur au bas du dos depuis une semaine"),
    ("128", 18, "toux persistante", "une toux qui ne passe pas depuis six semaines"),
    ("134", 18, "troubles du sommeil", "des difficultés à dormir depuis deux mois"),
    ("142", 18, "palpitations", "des palpitations survenant au repos"),
    ("151", 18, "douleur abdominale", "des douleurs au ventre après les repas"),
    ("165", 19, "troubles de la mémoire", "des oublis de plus en plus fréquents"),
    ("177", 17, "vertiges", "des sensations vertigineuses au lever"),
]

# Action templates; {theme} is substituted per station.  Each text is
# multi-word and distinct across the station.
ACTIONS = [
    "Vérifie l'identité du patient en début d'entretien concernant {theme}",
    "Se présente et explique le déroulement de la consultation pour {theme}",
    "Interroge sur le début des symptômes liés à {theme}",
    "Fait préciser la durée des épisodes de {theme}",
    "Recherche les facteurs déclenchants de {theme}",
    "Interroge sur la fréquence du tabagisme dans le contexte de {theme}",
    "Quantifie la consommation annuelle de tabac rapportée au sujet de {theme}",
    "Interroge sur la consommation d'alcool en lien avec {theme}",
    "Recherche des antécédents familiaux en rapport avec {theme}",
    "Demande la liste des traitements en cours pour {theme}",
    "Recherche une allergie médicamenteuse avant toute prescription liée à {theme}",
    "Évalue le retentissement sur la mémoire ou la concentration à propos de {theme}",
    "Interroge sur l'impact professionnel ou l'impact familial de {theme}",
    "Recherche des signes de gravité associés à {theme}",
    "Reformule les propos du patient au sujet de {theme}",
    "Explique les hypothèses diagnostiques envisagées pour {theme}",
    "Propose un examen complémentaire adapté à {theme}",
    "Expose le plan de prise en charge et le suivi de {theme}",
    "Vérifie la bonne compréhension du patient concernant {theme}",
]

# Declared dependency edges per station: dependent -> [dependencies].
# Criterion ids are c01..cNN in ACTIONS order.
DEPENDENCIES = {
    "128": {"c07": ["c03", "c06"]},   # quantify depends on onset + frequency
    "165": {"c07": ["c06"], "c18": ["c16"]},
    "142": {"c07": ["c06"]},
    "102": {"c18": ["c16"]},
}


def build_station(station_id, count, theme, complaint):
    criteria = []
    deps = DEPENDENCIES.get(station_id, {})
    for i in range(count):
        cid = f"c{i + 1:02d}"
        text = ACTIONS[i % len(ACTIONS)].format(theme=theme)
        criteria.append(
            {
                "id": cid,
                "text": text,
                "dependencies": deps.get(cid, []),
            }
        )
    return {
        "id": station_id,
        "doctor_sheet": {
            "situation": f"Consultation de médecine générale pour {theme}.",
            "identite_patient": "Patient(e) adulte consultant seul(e).",
            "objectifs": "Mener l'entretien, recueillir les informations et proposer un plan.",
        },
        "patient_sheet": {
            "contexte": f"Vous consultez pour {complaint}.",
            "symptomes": f"Vous décrivez des symptômes évocateurs de {theme}.",
            "comportement": "Vous répondez honnêtement mais ne donnez les détails que si on vous les demande.",
        },
        "criteria": criteria,
        "ordering_strategy": "ContextDriven" if station_id == "151" else "OIAP",
    }


def main():
    out = ROOT / "fixtures" / "stations"
    total = 0
    for station_id, count, theme, complaint in STATIONS:
        data = build_station(station_id, count, theme, complaint)
        path = out / station_id / "station.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
        total += count
    print(f"wrote {len(STATIONS)} stations, {total} criteria", file=sys.stderr)
    assert total == 179, total


if __name__ == "__main__":
    main()
