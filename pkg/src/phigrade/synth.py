"""Synthetic consultation corpus with gold triples, for offline benchmarking.

Records imitate patient-written consultation descriptions. Gold labels follow
the grading table and are checked to be fixed points of the rule pack under
every chunk that contains the entity, so replaying gold through the pipeline
reproduces it exactly.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .corpus import NamePool
from .pipeline import ConsultationRecord, chunk, sort_triples
from .rules import RulePack, apply_rules, load_rule_pack
from .taxonomy import Taxonomy, load_taxonomy
from .validator import Triple

GENOTYPES = ("16", "18", "31", "33", "35", "39", "45", "51", "52", "56", "58", "59", "68", "73", "82")

COMPLAINTS = ("头痛", "咳嗽三天", "反复发热", "腹痛", "失眠", "胸闷气短", "乏力", "皮疹", "腰痛",
              "恶心呕吐", "关节疼痛", "喉咙痛", "头晕", "心慌", "腹泻", "尿频尿急", "月经不调", "耳鸣")
DISEASES = ("高血压", "糖尿病", "慢性胃炎", "支气管炎", "过敏性鼻炎", "颈椎病", "湿疹", "甲状腺结节",
            "脂肪肝", "缺铁性贫血", "偏头痛", "腰椎间盘突出", "痛风", "荨麻疹", "冠心病")
SPECIAL = ("梅毒", "尖锐湿疣", "乙肝", "肺结核", "丙肝", "抑郁症", "焦虑症", "精神分裂症", "肺癌",
           "乳腺癌", "胃癌", "白血病", "淋巴瘤", "血友病", "地中海贫血", "痔疮", "肛瘘",
           "红斑狼疮", "重症肌无力", "艾滋病")
OCCUPATIONS = ("教师", "程序员", "护士", "司机", "会计", "销售", "厨师", "工人", "公务员", "学生")
PROVINCES = (("广东省", "深圳市"), ("浙江省", "杭州市"), ("江苏省", "南京市"), ("四川省", "成都市"),
             ("湖北省", "武汉市"), ("山东省", "青岛市"), ("福建省", "福州市"), ("河南省", "郑州市"))
TESTS = (("血常规", "白细胞偏高"), ("肝功能", "转氨酶升高"), ("胸部CT", "右肺下叶磨玻璃结节"),
         ("尿常规", "尿蛋白+"), ("甲功五项", "TSH偏低"), ("胃镜", "胃窦糜烂"), ("心电图", "窦性心动过速"),
         ("腹部B超", "胆囊息肉"), ("血脂", "甘油三酯偏高"), ("空腹血糖", "血糖7.8mmol/L"))
MEDICATIONS = ("阿莫西林", "布洛芬", "二甲双胍", "奥美拉唑", "氯雷他定", "头孢克肟", "硝苯地平",
               "阿托伐他汀", "左甲状腺素钠", "蒙脱石散")
DOSES = ("每次0.5g", "每次1片", "每次10mg", "每次20mg", "每次2粒")
FREQUENCIES = ("一天三次", "一天两次", "每天一次", "睡前一次")
ALLERGIES = ("青霉素过敏", "海鲜过敏", "花粉过敏", "磺胺类药物过敏")
FAMILY = ("父亲有高血压", "母亲有糖尿病", "外婆有冠心病", "父母都有高血压")
SURGERIES = ("阑尾切除术", "胆囊切除术", "剖宫产", "甲状腺部分切除术")
HOSPITALS = ("市第一人民医院", "省人民医院", "中山大学附属第一医院", "协和医院", "华西医院",
             "市中医院", "妇幼保健院")
DEPARTMENTS = ("消化内科", "呼吸内科", "皮肤科", "妇科", "心内科", "内分泌科", "神经内科",
               "肛肠科", "精神科", "感染科", "肿瘤科")
FILLER = ("\n医生：请问还有其他不舒服吗？\n患者：暂时没什么别的症状，就是休息不太好。"
          "\n医生：平时作息规律吗？\n患者：经常加班，睡得比较晚。")


@dataclass
class _Draft:
    parts: list
    gold: dict

    def add(self, text: str, *triples):
        self.parts.append(text)
        for entity, category, level in triples:
            self.gold.setdefault((entity, category, level), None)

    @property
    def text(self) -> str:
        return "".join(self.parts)


def _date(rng) -> str:
    return f"{rng.randint(2018, 2020)}年{rng.randint(1, 12)}月{rng.randint(1, 28)}日"


def _clinical(rng, d: _Draft, names: NamePool, mode: str):
    if rng.random() < 0.85:
        cc = rng.sample(COMPLAINTS, rng.choice((1, 1, 2)))
        d.add("主要症状是" + "、".join(cc) + "。", *[(c, "chief complaint", 2) for c in cc])
    if rng.random() < 0.3:
        if rng.random() < 0.7:
            date = _date(rng)
            d.add(f"{date}开始出现不适。", (date, "date", 3))
        else:
            month = f"{rng.randint(1, 12)}月份"
            d.add(f"大概{month}症状加重。", (month, "month", 2))
    if rng.random() < 0.45:
        dis = rng.choice(DISEASES)
        d.add(f"既往有{dis}病史。", (dis, "disease", 2))
    if mode == "special":
        sd = rng.choice(SPECIAL)
        d.add(f"去年确诊{sd}，目前正在治疗。", (sd, "special disease", 5))
    elif mode == "suspected":
        sd = rng.choice(SPECIAL)
        template = rng.choice(("医生怀疑是{}，想进一步确认。", "化验单提示疑似{}，很担心。"))
        d.add(template.format(sd), (sd, "disease-suspected", 2))
    elif mode == "ruled_out":
        sd = rng.choice(SPECIAL)
        template = rng.choice(("之前在医院检查已排除{}。", "医生说不是{}，让我放心。"))
        d.add(template.format(sd), (sd, "disease-ruled out", 2))
    if rng.random() < 0.45:
        name, result = rng.choice(TESTS)
        d.add(f"查了{name}，提示{result}。", (name, "test/exam name", 2),
              (result, "test/exam result", 3))
    if mode == "hpv":
        g = rng.choice(GENOTYPES)
        marker = rng.choice(("阳性", "阳性", "(+)"))
        span = f"HPV{g}{marker}"
        d.add(f"做了TCT和HPV分型检查，结果{span}。", ("TCT", "test/exam name", 2),
              ("HPV分型检查", "test/exam name", 2), (span, "sensitive test result", 5))
    elif mode == "hiv":
        d.add("体检查出HIV抗体阳性。", ("HIV抗体阳性", "sensitive test result", 5))
    if rng.random() < 0.25:
        if rng.random() < 0.5:
            t = f"{rng.randint(37, 39)}.{rng.randint(0, 9)}℃"
            d.add(f"测体温{t}。", (t, "temperature", 3))
        else:
            bp = f"{rng.randint(120, 170)}/{rng.randint(70, 105)}mmHg"
            d.add(f"血压{bp}。", (bp, "blood pressure", 3))
    if rng.random() < 0.45:
        med, dose, freq = rng.choice(MEDICATIONS), rng.choice(DOSES), rng.choice(FREQUENCIES)
        d.add(f"目前在吃{med}，{dose}，{freq}。", (med, "medication name", 2),
              (dose, "single dose", 2), (freq, "frequency", 2))
    if rng.random() < 0.1:
        a = rng.choice(ALLERGIES)
        d.add(f"本人{a}。", (a, "allergy history", 2))
    if rng.random() < 0.1:
        f = rng.choice(FAMILY)
        d.add(f"{f}。", (f, "family history", 2))
    if rng.random() < 0.08:
        year, surgery = f"{rng.randint(2010, 2019)}年", rng.choice(SURGERIES)
        d.add(f"{year}做过{surgery}。", (year, "year", 2), (surgery, "surgery name", 2))
    if rng.random() < 0.35:
        hosp, dept = rng.choice(HOSPITALS), rng.choice(DEPARTMENTS)
        d.add(f"之前在{hosp}{dept}看过。", (hosp, "hospital", 2), (dept, "department", 2))
    if rng.random() < 0.2:
        if rng.random() < 0.5:
            doc = rng.choice(names.names)
            d.add(f"{doc}医生建议复查。", (doc, "doctor name", 4))
        else:
            doc = rng.choice("王李张刘陈杨黄赵") + "医生"
            d.add(f"{doc}让我按时吃药。", (doc, "doctor surname", 3))


def _record(rng, names: NamePool) -> _Draft:
    d = _Draft([], {})
    if rng.random() < 0.012:
        d.add(rng.choice(("想咨询一下平时饮食要注意什么。", "请问长期熬夜对身体影响大吗？",
                          "想了解一下体检一般查哪些项目。")))
        return d
    d.add("病情描述：")
    r = rng.random()
    if r < 0.45:
        name = rng.choice(names.names)
        d.add(f"我叫{name}，", (name, "patient name", 4))
    elif r < 0.6:
        s = rng.choice("王李张刘陈杨黄赵") + rng.choice(("女士", "先生"))
        d.add(f"{s}，", (s, "patient surname", 3))
    if rng.random() < 0.8:
        g, age = rng.choice("男女"), f"{rng.randint(3, 85)}岁"
        d.add(f"性别{g}，今年{age}。", (g, "gender", 3), (age, "age", 3))
    if rng.random() < 0.2:
        occ = rng.choice(OCCUPATIONS)
        d.add(f"职业是{occ}。", (occ, "occupation", 3))
    if rng.random() < 0.15:
        prov, city = rng.choice(PROVINCES)
        d.add(f"现居{prov}{city}。", (prov, "address-province", 2), (city, "address-city", 2))
    if rng.random() < 0.1:
        d.add("已婚。", ("已婚", "marital status", 2))
    mode = rng.choices(("plain", "special", "suspected", "ruled_out", "hpv", "hiv"),
                       weights=(62, 15, 7, 6, 7, 3))[0]
    _clinical(rng, d, names, mode)
    if rng.random() < 0.01:
        # long conversational tail so the record spans several chunks
        d.add(FILLER * 90)
        _clinical(rng, d, names, "plain")
    if rng.random() < 0.02:
        phone = "1" + "".join(rng.choice("0123456789") for _ in range(10))
        d.add(f"联系电话{phone}。", (phone, "phone number", 4))
    d.add("希望医生帮忙看看。")
    return d


def check_fixed_points(description: str, triples, pack: RulePack, taxonomy: Taxonomy,
                       max_chunk_chars: int = 4000, overlap_chars: int = 200):
    chunks = chunk(description, max_chunk_chars, overlap_chars)
    for t in triples:
        if not taxonomy.is_compatible(t.category):
            raise AssertionError(f"gold category {t.category!r} not in taxonomy")
        if t.entity not in description:
            raise AssertionError(f"gold entity {t.entity!r} not in description")
        for text in chunks:
            if t.entity in text:
                after = apply_rules(t, text, pack).triple_after
                if after != t:
                    raise AssertionError(f"rules rewrite gold {t} -> {after}")


def generate(n: int = 1000, seed: int = 2020, pack: RulePack | None = None,
             taxonomy: Taxonomy | None = None):
    """Return (records, gold) with gold mapping record id -> sorted triples."""
    taxonomy = taxonomy or load_taxonomy()
    pack = pack or load_rule_pack(taxonomy=taxonomy)
    rng = random.Random(seed)
    names = NamePool.generate(seed)
    records, gold = [], {}
    for i in range(n):
        d = _record(rng, names)
        rid = f"MD2020-{i:04d}"
        meta = {"hospital": rng.choice(HOSPITALS), "department": rng.choice(DEPARTMENTS)}
        triples = sort_triples(Triple(e, c, lv) for e, c, lv in d.gold)
        check_fixed_points(d.text, triples, pack, taxonomy)
        records.append(ConsultationRecord(rid, d.text, meta))
        gold[rid] = triples
    return records, gold
