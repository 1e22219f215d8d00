#!/usr/bin/env python3
"""Writes the planted-cohort fixture under data/planted/.

Ten initiatives, each with its own vocabulary and 20 cohort postings drawn
from it, plus 100 distractor postings from an unrelated vocabulary. Output is
fully determined by SEED.

    python3 tools/make_planted_fixture.py [out_dir]
"""

import json
import random
import sys
from pathlib import Path

SEED = 20230601

COHORTS = [
    ("Cloud Computing",
     "cloud kubernetes terraform serverless containers virtualization elasticity provisioning multicloud iaas "
     "paas saas hypervisor autoscaling ingress helm lambda azure gcp datacenter workloads orchestration "
     "tenancy buckets vpc",
     ["Cloud Engineer", "DevOps Engineer", "Site Reliability Engineer", "Platform Engineer", "Cloud Architect",
      "Solutions Architect", "Infrastructure Engineer", "Kubernetes Administrator", "Cloud Security Engineer",
      "Systems Administrator", "Cloud Consultant", "Build Engineer", "Network Engineer", "Cloud Support Analyst"]),
    ("Generative AI",
     "generative llm transformer diffusion prompting embeddings finetuning pretraining tokenizer gpt chatbot "
     "multimodal inference hallucination rlhf pytorch attention decoder foundation synthetic alignment agents "
     "retrieval lora gpu",
     ["Machine Learning Engineer", "Deep Learning Engineer", "Post-Doctoral Researcher", "Prompt Engineer",
      "Applied Scientist", "AI Product Manager", "Research Scientist", "NLP Engineer", "AI Solutions Architect",
      "Conversational Designer", "MLOps Engineer", "AI Ethics Advisor", "Computer Vision Engineer",
      "AI Sales Executive"]),
    ("Quantum Computing",
     "quantum qubits superposition entanglement qiskit annealing decoherence photonic cryogenic topological "
     "hamiltonian variational qaoa shor grover cirq fidelity trapped ions superconducting tomography "
     "interferometry spin dilution teleportation",
     ["Quantum Software Engineer", "Quantum Physicist", "Quantum Algorithms Researcher", "Cryogenic Technician",
      "Photonics Engineer", "Quantum Hardware Engineer", "Experimental Physicist", "Control Systems Physicist",
      "Quantum Applications Scientist", "Microwave Engineer", "Fabrication Scientist", "Theoretical Physicist",
      "Quantum Error Correction Scientist", "Laser Technician"]),
    ("Blockchain",
     "blockchain ledger cryptocurrency solidity ethereum tokenomics defi consensus nft wallets staking "
     "validators hashing merkle bitcoin stablecoin dapps custody onchain mining web3 rollups oracles peer "
     "payments",
     ["Blockchain Developer", "Smart Contract Auditor", "Solidity Engineer", "Crypto Analyst",
      "Protocol Engineer", "Tokenomics Designer", "Digital Asset Custodian", "Wallet Engineer",
      "DeFi Product Manager", "Payments Engineer", "Crypto Compliance Officer", "Node Operator",
      "Web3 Community Manager", "Blockchain Architect"]),
    ("Cybersecurity",
     "cybersecurity siem soc threat malware phishing firewall pentesting vulnerability incident forensics "
     "encryption iam zero trust ransomware endpoint edr nist hardening intrusion splunk exploit patching "
     "redteam",
     ["Security Analyst", "Penetration Tester", "SOC Analyst", "Incident Responder", "Security Architect",
      "Threat Intelligence Analyst", "Forensic Investigator", "Identity Engineer", "Security Engineer",
      "Vulnerability Manager", "CISO", "GRC Analyst", "Malware Reverse Engineer", "Red Team Operator"]),
    ("Agile Ways of Working",
     "agile scrum kanban sprint backlog retrospective standup jira velocity epics stories ceremonies coaching "
     "iterative increments squads tribes facilitation burndown impediments cadence estimation refinement "
     "servant safe",
     ["Scrum Master", "Agile Coach", "Product Owner", "Delivery Lead", "Release Train Engineer",
      "Iteration Manager", "Agile Delivery Manager", "Ways of Working Consultant", "Portfolio Manager",
      "Change Manager", "Transformation Lead", "Kanban Coach", "Program Manager", "Business Analyst"]),
    ("Product Customisation",
     "customisation personalisation configurators bespoke tailored variants modularity preferences "
     "recommendation merchandising engraving monogramming sizing fitting consumer loyalty catalogue assortment "
     "packaging styling upsell crm ecommerce storefront returns",
     ["Product Developer", "Merchandise Planner", "Personal Stylist", "Ecommerce Manager", "CRM Specialist",
      "Product Designer", "Customer Insights Analyst", "Category Manager", "Packaging Designer",
      "Loyalty Manager", "Fit Technician", "Engraving Technician", "Digital Merchandiser", "Tailor"]),
    ("Renewable Energy",
     "renewable solar photovoltaic wind turbines battery storage inverter grid decarbonisation hydrogen "
     "geothermal offshore substation transmission ppa emissions netzero biomass hydro microgrid sustainability "
     "carbon megawatt interconnection",
     ["Solar Engineer", "Wind Turbine Technician", "Grid Connection Engineer", "Energy Analyst",
      "Sustainability Manager", "Battery Systems Engineer", "Hydrogen Engineer", "Substation Designer",
      "Carbon Accountant", "Electrical Engineer", "Renewable Project Developer", "Power Systems Engineer",
      "Energy Trader", "Commissioning Engineer"]),
    ("Market Entry",
     "market entry expansion localisation distributors partnerships competitor pricing regulatory franchising "
     "export import tariffs channels launch brand positioning acquisition joint venture subsidiaries "
     "feasibility demand territories landscape",
     ["Strategy Planner", "Marketing Coordinator", "Business Development Manager", "Country Manager",
      "Market Research Analyst", "Brand Manager", "Partnerships Manager", "Pricing Analyst",
      "Regulatory Affairs Specialist", "Export Coordinator", "Franchise Manager", "Corporate Strategy Analyst",
      "Channel Manager", "Launch Manager"]),
    ("Smart Manufacturing",
     "manufacturing iiot plc scada automation robotics cnc mes digital twin sensors predictive maintenance "
     "oee sixsigma kaizen assembly throughput factory machining additive printing cobots telemetry yield "
     "tooling",
     ["Automation Engineer", "Robotics Technician", "Manufacturing Engineer", "PLC Programmer",
      "Maintenance Planner", "Process Engineer", "Quality Engineer", "CNC Machinist", "Production Supervisor",
      "Controls Engineer", "Industrial Data Analyst", "Additive Manufacturing Specialist", "Reliability Engineer",
      "Mechatronics Technician"]),
]

DISTRACTOR_WORDS = (
    "accounting payroll reception nursing patient cleaning hospitality barista warehouse forklift retail "
    "cashier teaching classroom childcare plumbing carpentry delivery kitchen catering invoices bookkeeping "
    "audit filing appointments pharmacy dental veterinary gardening landscaping guard roster uniform shifts "
    "customers stock pallets lifting cooking menu hygiene wards medication lessons students timber pipes "
    "vehicle licence lawns pruning reconciliation ledgerless receipts bedside"
).split()

DISTRACTOR_TITLES = [
    "Accountant", "Payroll Officer", "Receptionist", "Registered Nurse", "Cleaner", "Barista",
    "Warehouse Operator", "Forklift Driver", "Retail Assistant", "Teacher", "Childcare Educator", "Plumber",
    "Carpenter", "Chef", "Bookkeeper", "Dental Assistant", "Gardener", "Security Guard", "Delivery Driver",
    "Pharmacy Assistant",
]

FILLER = "join our team this role offers".split()
LOCATIONS = ["Sydney, AU", "Melbourne, AU", "Brisbane, AU", "London, UK", "Manchester, UK", "New York, US",
             "Austin, US", "Seattle, US"]
SENIORITY = ["Senior", "Lead", "Junior", "Principal", "Senior", "Graduate"]


def slug(name):
    out, dash = [], False
    for ch in name.lower():
        if ch.isalnum():
            out.append(ch)
            dash = False
        elif out and not dash:
            out.append("-")
            dash = True
    return "".join(out).strip("-")


def sentence(words):
    return " ".join(words).capitalize() + "."


def description(rng, vocab, lo, hi):
    words = rng.sample(vocab, rng.randint(lo, hi)) + rng.sample(FILLER, 2)
    rng.shuffle(words)
    return sentence(words)


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "data" / "planted"
    rng = random.Random(SEED)

    vocabularies = [c[1].split() for c in COHORTS]
    seen = set()
    for v in vocabularies + [DISTRACTOR_WORDS, FILLER]:
        assert len(set(v)) == len(v), v
        assert not seen & set(v), seen & set(v)
        seen |= set(v)

    records = []
    for ci, (name, _, titles) in enumerate(COHORTS):
        vocab = vocabularies[ci]
        companies = [f"{name.split()[0]} {suffix}" for suffix in ("Labs", "Group", "Partners", "Systems", "Works")]
        for k in range(20):
            if k < len(titles):
                title, company = titles[k], companies[k % len(companies)]
            else:
                j = k - len(titles)
                title = f"{SENIORITY[j]} {titles[j]}"
                # The first two variants repost with the original company.
                company = companies[j % len(companies)] if j < 2 else companies[(j + 2) % len(companies)]
            records.append({
                "source_id": f"{slug(name)}-{k:02d}",
                "title": title,
                "description": description(rng, vocab, 17, 21),
                "company": company,
                "location": LOCATIONS[rng.randrange(len(LOCATIONS))],
                "posted_date": f"2023-{3 + rng.randrange(4):02d}-{1 + rng.randrange(28):02d}",
                "url": f"https://jobs.example.test/cohort/{slug(name)}/{k:02d}",
            })
    for k in range(100):
        records.append({
            "source_id": f"distractor-{k:03d}",
            "title": DISTRACTOR_TITLES[k % len(DISTRACTOR_TITLES)],
            "description": description(rng, DISTRACTOR_WORDS, 14, 20),
            "company": f"Local Employer {k % 17}",
            "location": LOCATIONS[rng.randrange(len(LOCATIONS))],
            "posted_date": f"2023-{3 + rng.randrange(4):02d}-{1 + rng.randrange(28):02d}",
            "url": f"https://jobs.example.test/distractor/{k:03d}",
        })
    rng.shuffle(records)
    assert len({(r["title"], r["description"]) for r in records}) == len(records)

    (out / "drivers").mkdir(parents=True, exist_ok=True)
    with open(out / "corpus.jsonl", "w", encoding="utf-8", newline="\n") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")
    for (name, _, _), vocab in zip(COHORTS, vocabularies):
        with open(out / "drivers" / f"{name}.txt", "w", encoding="utf-8", newline="\n") as f:
            f.write("# synthetic definition, vocabulary shared only with its planted cohort\n")
            for i in range(0, len(vocab), 9):
                f.write(sentence(vocab[i:i + 9]) + "\n")


if __name__ == "__main__":
    main()
