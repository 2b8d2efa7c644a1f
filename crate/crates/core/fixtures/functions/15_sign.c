int sign(long long v)
{
    int s;
    if (v < 0)
        s = -1;
    else if (v > 0)
        s = 1;
    else
        s = 0;
    return s;
}
