# Banach KL numerical backend