# Utilitaires d'entrée/sortie (octets, fichiers texte)
