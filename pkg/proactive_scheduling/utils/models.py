from uuid import uuid4

from django.db.models import UUIDField
from model_utils.models import SoftDeletableModel
from model_utils.models import TimeStampedModel


class BaseModel(TimeStampedModel, SoftDeletableModel):
    """UUID-keyed, timestamped, soft-deletable base for persisted records."""

    id = UUIDField(primary_key=True, default=uuid4, editable=False)

    class Meta:
        abstract = True
