# Orlicz Risk Desk
