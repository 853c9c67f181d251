"""Word pools for synthetic listing pages.

None of the filler pools may contain a pattern anchor keyword; the generator
relies on that so the first regex match on a clean page is always the
rendered entity.
"""
from __future__ import annotations

# Keywords the per-market patterns anchor on (lowercased).
ANCHOR_WORDS = frozenset(
    """purchase listings 1listings 1purchase message category availability price usd btc
    class in stock eur reviews model details escrow orders recherche description modèle
    disponibilité avis rating type leftsold offers quality information silk road remaining
    product brand sku vendor palmetto state armory market views""".split()
)

ENGLISH_FILLER = """
home account settings logout support faq wallet deposit withdraw balance forum news rules
contact help search browse sort newest oldest popular featured trusted shipping worldwide
domestic express tracking escrowed secure encrypted pgp key verified member since level
feedback positive negative neutral dispute resolved pending completed cancelled refund
policy terms about us team staff moderator admin announcements maintenance mirror links
status online offline uptime captcha login register password username notifications inbox
outbox sent drafts favourites wishlist cart checkout order history total subtotal fee fees
network fast slow delivery packed sealed vacuum stealth discreet tracked untracked
germany netherlands france spain italy poland canada australia united kingdom asia
rated top seller new arrivals bestsellers deals discount bulk sample samples retail wholesale
guide tutorial safety tips harm reduction dosage warning notice please note always never
monday tuesday wednesday thursday friday saturday sunday morning evening night today yesterday
lorem ipsum dolor sit amet consectetur adipiscing elit sed do eiusmod tempor incididunt labore
dolore magna aliqua enim minim veniam quis nostrud exercitation ullamco laboris nisi aliquip
commodo consequat duis aute irure reprehenderit voluptate velit esse cillum fugiat nulla
""".split()

FRENCH_FILLER = """
accueil compte paramètres déconnexion aide portefeuille dépôt retrait solde forum nouvelles
règles contacter chercher parcourir trier récents anciens populaires vedettes livraison
mondiale nationale suivi sécurisé chiffré clé vérifié membre depuis niveau retours positifs
négatifs neutres litige résolu attente terminé annulé remboursement politique conditions
propos équipe modérateur annonces maintenance miroir liens statut connecté déconnecté
inscription mot passe utilisateur messagerie boîte envoyés brouillons favoris panier
commande historique frais réseau rapide lente emballé scellé sous vide furtif discret
europe allemagne pays bas espagne italie pologne canada australie royaume uni asie
meilleurs vendeurs nouveautés promotions remise échantillon détail gros guide conseils
sécurité réduction risques dosage avertissement veuillez noter toujours jamais lundi
mardi mercredi jeudi vendredi samedi dimanche matin soir nuit aujourd'hui hier merci
bonjour bienvenue notre votre vous nous avec sans pour dans sur sous très plus moins
""".split()

# French anchor and filler vocabulary: must never show up on English pages.
FRENCH_KEYWORDS = frozenset(
    {"recherche", "avis", "modèle", "disponibilité", "vendeur", "vues"}
    | (set(FRENCH_FILLER) - set(ENGLISH_FILLER))
)

ENGLISH_DESCRIPTION = """
discreet shipping worldwide stealth vacuum sealed fast delivery tested pure potent strong
smooth clean fresh batch organic grown indoor outdoor lab premium grade reship guarantee
tracked packaging double bagged odor proof reliable friendly service repeat customers
welcome bulk discounts available contact before ordering no refunds after finalize early
""".split()

FRENCH_DESCRIPTION = """
livraison discrète rapide emballage sous vide produit pur puissant frais récolte intérieur
extérieur testé laboratoire qualité supérieure envoi suivi garanti clients fidèles remise
disponible contactez nous avant commande aucun remboursement après finalisation merci
""".split()

DRUGS = """
hash cocaine mdma ketamine lsd xanax oxycodone amphetamine speed heroin weed kush haze
amnesia gorilla glue shrooms psilocybin dmt valium tramadol fentanyl meth crystal molly
ecstasy pills tabs blotters edibles wax shatter resin pollen skunk cbd adderall ritalin
codeine morphine suboxone
""".split()

PRODUCT_ADJECTIVES = """
premium pure top fresh organic uncut colombian dutch moroccan afghan swiss purple golden
white blue pink lemon northern southern indica sativa hybrid lab tested strong mild
""".split()

UNITS = ["g", "mg", "x", "oz", "ml", "kg"]

CATEGORIES_EN = """
cannabis stimulants ecstasy opioids psychedelics benzos dissociatives prescription steroids
tobacco edibles concentrates
""".split()

CATEGORIES_FR = ["cannabis", "stimulants", "ecstasy", "opiacés", "psychédéliques",
                 "benzodiazépines", "herbe", "résine", "dissociatifs", "médicaments"]

VENDORS = """
greenleaf alice dutchmaster kingpin99 nightowl stealthbro pharmaqueen bluemoon dankhouse
topshelf cocochanel mrwhite silverfox happyhippo darkknight lucky7 medsdirect frenchconnect
euroflow cryptokid mountainhigh oceanbreeze sunrise420 blackrose wizardlab ghostship
candyman zenmaster polarbear redline quicksilver tokyodrift berlinbear lemonhaze
velvetunderground atlas moonshine starlight cheshire rabbithole nomad viper phoenix
goldrush pandora cobalt mercury""".split()

# Palmetto (firearms) vocabulary, reduced-scale version of the robustness market.
FIREARM_PRODUCTS = """
rifle pistol carbine upper lower receiver barrel kit magazine optic scope suppressor
buttstock handguard trigger bolt carrier slide frame holster sling muzzle brake compensator
""".split()
FIREARM_CALIBERS = ["5.56", "9mm", ".45", ".308", "7.62x39", "6.5", ".22lr", "10mm", "12ga"]
FIREARM_ADJECTIVES = """
complete stripped tactical compact fullsize lightweight heavy match grade freefloat
forged billet nitride chrome lined threaded optics ready
""".split()
BRANDS = """
glock ruger springfield sig aero anderson daniel bcm psa geissele magpul vortex holosun
aimpoint trijicon radian faxon ballistic toolcraft sionics larue noveske stag
""".split()
FIREARM_CATEGORIES = """
rifles pistols uppers lowers barrels magazines optics suppressors parts accessories
triggers stocks handguards muzzle ammunition holsters slings lights lasers
""".split()

LANGUAGE_FILLER = {"en": ENGLISH_FILLER, "fr": FRENCH_FILLER}
